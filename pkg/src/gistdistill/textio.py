"""Tokenisation, vocabularies, corpora, embeddings and word representations."""
from __future__ import annotations

import json
import re
import zlib
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import ParamSet, Tensor
from .autodiff import nn
from .autodiff import tensor as F

PAD, UNK, SOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
RESERVED = (PAD, UNK, SOS, EOS)
PAD_ID, UNK_ID, SOS_ID, EOS_ID = range(4)

_TOKEN_RE = re.compile(r"<[a-z/]+>|\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, then split into word runs and single punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def dump(self, path) -> None:
        Path(path).write_text("".join(f"{t}\t{i}\n" for i, t in enumerate(self.itos)), encoding="utf-8")

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Frequency-ranked vocabulary (ties lexicographic), reserved ids 0..3 first."""
    if max_size < len(RESERVED):
        raise ValueError(f"max_size must be at least {len(RESERVED)}")
    counts = Counter()
    n_docs = 0
    for tokens in corpus:
        n_docs += 1
        counts.update(t for t in tokens if t not in RESERVED)
    if n_docs == 0 or not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [t for t, _ in ranked[: max_size - len(RESERVED)]]
    return Vocabulary(list(RESERVED) + keep)


class CharVocab:
    """Character ids: 0 is padding, 1 unknown."""

    def __init__(self, chars: Sequence[str]):
        self.chars = list(chars)
        self.stoi = {c: i + 2 for i, c in enumerate(self.chars)}

    def __len__(self) -> int:
        return len(self.chars) + 2

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> CharVocab:
        return cls(sorted({c for t in tokens for c in t}))

    def encode(self, token: str) -> list[int]:
        return [self.stoi.get(c, 1) for c in token]


# ---------------------------------------------------------------- corpora

@dataclass
class ArticlePair:
    id: str
    source: list[str]
    summary: list[str]

    def __post_init__(self):
        if not self.source:
            raise ValueError(f"example {self.id}: empty source")
        if not self.summary:
            raise ValueError(f"example {self.id}: empty summary")


@dataclass
class LabeledDoc:
    id: str
    tokens: list[str]
    label: str


def _read_jsonl(path) -> list[dict]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"corpus not found: {p}")
    rows = []
    with p.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{p}:{lineno}: invalid JSON ({exc.msg})") from None
    return rows


def read_pairs(path) -> list[ArticlePair]:
    rows = _read_jsonl(path)
    pairs = [ArticlePair(str(r["id"]), tokenize(r["source"]), tokenize(r["summary"])) for r in rows]
    return sorted(pairs, key=lambda p: p.id)


def read_labeled(path) -> list[LabeledDoc]:
    rows = _read_jsonl(path)
    docs = [LabeledDoc(str(r["id"]), tokenize(r["text"]), str(r["label"])) for r in rows]
    for d in docs:
        if not d.tokens:
            raise ValueError(f"document {d.id}: empty text")
    return sorted(docs, key=lambda d: d.id)


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------- embeddings

@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    seed: int = 0
    _oov: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def oov_vector(self, token: str) -> np.ndarray:
        key = zlib.crc32(token.encode("utf-8"))
        rng = np.random.default_rng([self.seed, key])
        return rng.uniform(-0.1, 0.1, self.dim)

    def __getitem__(self, token: str) -> np.ndarray:
        v = self.vectors.get(token)
        if v is None:
            v = self._oov.get(token)
            if v is None:
                v = self._oov[token] = self.oov_vector(token)
        return v

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def matrix(self, vocab: Vocabulary) -> np.ndarray:
        out = np.stack([self[t] for t in vocab.itos])
        out[PAD_ID] = 0.0
        return out


def load_embeddings(path, dim: int, seed: int = 0) -> EmbeddingTable:
    """Parse ``token v1 ... vdim`` lines (GloVe text format)."""
    table = EmbeddingTable(dim, seed=seed)
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0]:
                continue
            values = parts[1:]
            if len(values) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} floats, found {len(values)}")
            try:
                table.vectors[parts[0]] = np.array([float(v) for v in values])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed float") from None
    return table


# ---------------------------------------------------------------- word representation

@dataclass(frozen=True)
class WordReprConfig:
    word_dim: int
    char_dim: int = 16
    n_filters: int = 100
    width: int = 5
    freeze_words: bool = False

    @property
    def out_dim(self) -> int:
        return self.word_dim + self.n_filters


TEACHER_REPR = WordReprConfig(word_dim=300, char_dim=16, n_filters=100)
STUDENT_REPR = WordReprConfig(word_dim=100, char_dim=16, n_filters=50)


def init_word_repr(ps: ParamSet, name: str, cfg: WordReprConfig, vocab_size: int,
                   char_vocab_size: int, rng, pretrained: np.ndarray | None = None) -> None:
    if pretrained is not None:
        if pretrained.shape != (vocab_size, cfg.word_dim):
            raise ValueError(f"pretrained matrix {pretrained.shape} != {(vocab_size, cfg.word_dim)}")
        words = pretrained.copy()
    else:
        words = rng.uniform(-0.1, 0.1, (vocab_size, cfg.word_dim))
        words[PAD_ID] = 0.0
    ps.add(f"{name}.words", words)
    if cfg.n_filters:
        ps.add(f"{name}.chars", rng.uniform(-0.1, 0.1, (char_vocab_size, cfg.char_dim)))
        nn.init_linear(ps, f"{name}.conv", cfg.width * cfg.char_dim, cfg.n_filters, rng)


def char_matrix(tokens: Sequence[str], chars: CharVocab, width: int) -> np.ndarray:
    """(N, L) char ids, right-padded with 0 to at least ``width``."""
    L = max(width, max(len(t) for t in tokens))
    out = np.zeros((len(tokens), L), dtype=np.int64)
    for k, t in enumerate(tokens):
        ids = chars.encode(t)
        out[k, :len(ids)] = ids
    return out


def char_cnn(ps: ParamSet, name: str, char_ids: np.ndarray, width: int) -> Tensor:
    """Convolution over character embeddings, then max over valid windows.

    ``char_ids`` is (N, L) with zero padding; padding embeds to zero and a token
    shorter than ``width`` still gets exactly one window.
    """
    char_ids = np.asarray(char_ids)
    N, L = char_ids.shape
    if L < width:
        char_ids = np.pad(char_ids, ((0, 0), (0, width - L)))
        L = width
    real = char_ids > 0
    emb = F.embedding(ps[f"{name}.chars"], char_ids) * real[..., None].astype(float)
    n_win = L - width + 1
    windows = F.concat([emb[:, k:k + n_win] for k in range(width)], axis=-1)
    conv = nn.linear(ps, f"{name}.conv", windows)
    lengths = real.sum(axis=1)
    valid = np.arange(n_win)[None, :] < np.maximum(lengths - width + 1, 1)[:, None]
    conv = conv + np.where(valid, 0.0, -1e9)[..., None]
    return F.amax(conv, axis=1)


@lru_cache(maxsize=512)
def _unique_index(tokens_key: tuple) -> tuple:
    uniq = sorted(set(tokens_key))
    where = {t: k for k, t in enumerate(uniq)}
    return tuple(uniq), np.array([where[t] for t in tokens_key], dtype=np.int64)


def word_repr(ps: ParamSet, name: str, cfg: WordReprConfig, word_ids: np.ndarray,
              tokens: Sequence[Sequence[str]], chars: CharVocab) -> Tensor:
    """[word vector ; char-CNN feature] for a padded (B, T) batch.

    ``tokens`` holds the raw strings per example; positions past each
    example's length are padding and get the PAD embedding.
    """
    word_ids = np.asarray(word_ids)
    B, T = word_ids.shape
    words = ps[f"{name}.words"]
    if cfg.freeze_words:
        words = words.detach()
    wv = F.embedding(words, word_ids)
    if not cfg.n_filters:
        return wv
    flat = tuple(tokens[b][t] if t < len(tokens[b]) else PAD for b in range(B) for t in range(T))
    uniq, index = _unique_index(flat)
    feats = char_cnn(ps, name, char_matrix(uniq, chars, cfg.width), cfg.width)
    cv = F.reshape(F.embedding(feats, index), (B, T, cfg.n_filters))
    return F.concat([wv, cv], axis=-1)
