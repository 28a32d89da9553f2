"""Seeded keyword-copy corpora.

Each document is a run of noise words with ``k`` planted signal words. All
signal words of a document come from one of two disjoint lexicons, which
fixes its binary label; the reference summary is the signal words in order.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .textio import write_jsonl

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
_VOWELS = ["a", "e", "i", "o", "u"]
LABELS = ("neg", "pos")


def _lexicon(rng: np.random.Generator, n: int, syllables: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


@dataclass(frozen=True)
class Lexicons:
    noise: tuple[str, ...]
    signal: tuple[tuple[str, ...], tuple[str, ...]]


def make_lexicons(n_noise: int = 200, n_signal: int = 60, seed: int = 1234) -> Lexicons:
    """Noise words and two disjoint signal lexicons, fixed by ``seed``."""
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    noise = _lexicon(rng, n_noise, 2, taken)
    sig_a = _lexicon(rng, n_signal, 3, taken)
    sig_b = _lexicon(rng, n_signal, 3, taken)
    return Lexicons(tuple(noise), (tuple(sig_a), tuple(sig_b)))


@dataclass
class SyntheticDoc:
    id: str
    tokens: list[str]
    signal_positions: list[int]
    label: str

    @property
    def summary(self) -> list[str]:
        return [self.tokens[i] for i in self.signal_positions]

    def pair_row(self) -> dict:
        return {"id": self.id, "source": " ".join(self.tokens), "summary": " ".join(self.summary)}

    def labeled_row(self) -> dict:
        return {"id": self.id, "text": " ".join(self.tokens), "label": self.label}


def generate(n: int, seed: int, min_len: int = 80, max_len: int = 140, k: int = 3,
             lexicons: Lexicons | None = None, prefix: str = "doc") -> list[SyntheticDoc]:
    if not 1 <= k <= min_len:
        raise ValueError("need 1 <= k <= min_len")
    lex = lexicons or make_lexicons()
    rng = np.random.default_rng(seed)
    width = len(str(n - 1))
    docs = []
    for j in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        label = int(rng.integers(2))
        tokens = list(rng.choice(lex.noise, size=length))
        positions = sorted(int(p) for p in rng.choice(length, size=k, replace=False))
        signal = rng.choice(lex.signal[label], size=k, replace=False)
        for p, w in zip(positions, signal):
            tokens[p] = str(w)
        docs.append(SyntheticDoc(f"{prefix}-{j:0{width}d}", [str(t) for t in tokens],
                                 positions, LABELS[label]))
    return docs


def write_corpus(out_dir, seed: int, n_train: int = 500, n_dev: int = 100, n_test: int = 100,
                 **kwargs) -> dict[str, Path]:
    """Write ``{split}.pairs.jsonl`` and ``{split}.labeled.jsonl`` for each split."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    splits = {"train": n_train, "dev": n_dev, "test": n_test}
    for offset, (split, n) in enumerate(splits.items()):
        if n <= 0:
            continue
        docs = generate(n, seed * 1000 + offset, prefix=split, **kwargs)
        paths[f"{split}.pairs"] = out / f"{split}.pairs.jsonl"
        paths[f"{split}.labeled"] = out / f"{split}.labeled.jsonl"
        write_jsonl(paths[f"{split}.pairs"], (d.pair_row() for d in docs))
        write_jsonl(paths[f"{split}.labeled"], (d.labeled_row() for d in docs))
    return paths
