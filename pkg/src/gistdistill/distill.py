"""Soft targets from teacher attention, transfer sets, and student distillation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import softmax_t
from .autodiff import tensor as F
from .gist import GistDetector, StudentConfig
from .teacher import AttentionRecord, PointerGenerator, record_attention
from .textio import ArticlePair, CharVocab, Vocabulary
from .training import OptimConfig, batches, train_steps

FORMAT = "gd-transfer-v1"


def soft_target(logits: np.ndarray, T: float, geometric: bool = False) -> np.ndarray:
    """Average of the tempered per-step attention distributions.

    ``logits`` is (T_y, m). With ``geometric`` the steps are combined by a
    renormalised geometric mean instead.
    """
    d = np.asarray(logits, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] == 0:
        raise ValueError("soft_target needs at least one decode step")
    p = softmax_t(d, T)
    if geometric:
        z = np.log(p).mean(axis=0)
        return softmax_t(z)
    return p.mean(axis=0)


def ensemble_soft_target(qs: Sequence[np.ndarray]) -> np.ndarray:
    if not qs:
        raise ValueError("need at least one soft target")
    n = {len(q) for q in qs}
    if len(n) != 1:
        raise ValueError(f"soft targets differ in length: {sorted(n)}")
    return np.mean(np.stack(qs), axis=0)


def entropy(q: np.ndarray) -> float:
    q = np.asarray(q, dtype=np.float64)
    nz = q > 0
    return float(-(q[nz] * np.log(q[nz])).sum())


def distill_loss(q: np.ndarray, p_d: np.ndarray) -> float:
    """Cross-entropy -sum_i Q_i log P_d,i over source positions."""
    q, p_d = np.asarray(q, dtype=np.float64), np.asarray(p_d, dtype=np.float64)
    if q.shape != p_d.shape:
        raise ValueError(f"length mismatch: Q {q.shape} vs P_d {p_d.shape}")
    return float(-(q * np.log(p_d)).sum())


@dataclass
class SoftTargetRecord:
    id: str
    tokens: list[int]
    words: list[str]
    q: np.ndarray
    T: float
    K: int
    mode: str

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        if len(self.q) != len(self.tokens) or len(self.words) != len(self.tokens):
            raise ValueError(f"record {self.id}: Q length {len(self.q)} != source length {len(self.tokens)}")
        if (self.q < 0).any() or abs(self.q.sum() - 1.0) > 1e-6:
            raise ValueError(f"record {self.id}: Q is not a distribution")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class TransferSet:
    records: list[SoftTargetRecord]
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate record ids in transfer set")

    @property
    def T(self) -> float:
        return float(self.header["T"])

    def write(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"format": FORMAT, **self.header}, sort_keys=True) + "\n")
            for r in self.records:
                head = json.dumps({"id": r.id, "tokens": r.tokens, "words": r.words,
                                   "T": r.T, "K": r.K, "mode": r.mode}, ensure_ascii=False)
                q = "[" + ", ".join(_fmt(v) for v in r.q) + "]"
                fh.write(head[:-1] + f', "q": {q}}}\n')

    @classmethod
    def read(cls, path) -> TransferSet:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"transfer set not found: {p}")
        lines = p.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError(f"{p}: empty transfer set")
        header = json.loads(lines[0])
        if header.pop("format", None) != FORMAT:
            raise ValueError(f"{p}: not a {FORMAT} file")
        records = []
        for line in lines[1:]:
            r = json.loads(line)
            records.append(SoftTargetRecord(r["id"], r["tokens"], r["words"], np.array(r["q"]),
                                            float(r["T"]), int(r["K"]), r["mode"]))
        return cls(records, header)

    def equal(self, other: TransferSet) -> bool:
        return self.header == other.header and len(self.records) == len(other.records) and all(
            a.id == b.id and a.tokens == b.tokens and a.words == b.words and a.T == b.T
            and a.K == b.K and a.mode == b.mode and np.array_equal(a.q, b.q)
            for a, b in zip(self.records, other.records))


def vocab_hash(vocab: Vocabulary) -> str:
    return hashlib.sha256("\n".join(vocab.itos).encode("utf-8")).hexdigest()[:16]


def build_transfer_set(pairs: Sequence[ArticlePair], teachers: Sequence[PointerGenerator], T: float,
                       mode: str = "teacher-forced", teacher_hashes: Sequence[str] = (),
                       geometric: bool = False, vocab: Vocabulary | None = None) -> TransferSet:
    """One soft-target record per example, averaged over the teacher ensemble."""
    if not teachers:
        raise ValueError("need at least one teacher")
    if not T > 0:
        raise ValueError("temperature must be positive")
    ref = vocab or teachers[0].vocab
    for k, t in enumerate(teachers):
        if t.vocab != ref:
            raise ValueError(f"teacher {k} vocabulary does not match the corpus vocabulary")
    per_teacher = [record_attention(t, pairs, mode) for t in teachers]
    records = []
    for j, pair in enumerate(pairs):
        qs = [soft_target(recs[j].logits, T, geometric) for recs in per_teacher]
        m = len(qs[0])
        words = pair.source[:m]
        records.append(SoftTargetRecord(pair.id, ref.encode(words), words,
                                        ensemble_soft_target(qs), T, len(teachers), mode))
    header = {"teachers": list(teacher_hashes), "T": T, "K": len(teachers), "mode": mode,
              "geometric": geometric, "vocab": vocab_hash(ref)}
    return TransferSet(records, header)


def train_student(ts: TransferSet, cfg: StudentConfig, vocab: Vocabulary, chars: CharVocab):
    """Minimise mean cross-entropy between Q and the student's tempered output."""
    if not ts.records:
        raise ValueError("empty transfer set")
    if cfg.train_T != ts.T:
        raise ValueError(f"student training temperature {cfg.train_T} != transfer-set temperature {ts.T}")
    model = GistDetector(cfg, vocab, chars)
    recs = ts.records
    rng = np.random.default_rng(cfg.seed + 1)
    stream = batches(len(recs), cfg.batch_size, rng)

    def loss_fn(idx):
        chunk = [recs[i] for i in idx]
        batch = model.batch([r.id for r in chunk], [r.words for r in chunk])
        q = np.zeros(batch.mask.shape)
        for b, r in enumerate(chunk):
            m = len(batch.tokens[b])
            q[b, :m] = r.q[:m] / r.q[:m].sum()
        p = model.weights(batch, cfg.train_T, training=True, rng=rng)
        # padded positions have q == 0; keep log finite there
        logp = F.log(p + (~batch.mask).astype(float))
        return F.tsum(logp * (-q)) * (1.0 / len(chunk))

    opt = OptimConfig(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, clip=cfg.clip)
    trainable = [n for n in model.params.names()
                 if not (cfg.freeze_words and n.endswith(".embed.words"))]
    curve = train_steps(model.params, loss_fn, stream, cfg.steps, opt, "student", cfg.log_every,
                        trainable=trainable)
    return model, curve


def mean_kl(model: GistDetector, ts: TransferSet, T: float | None = None) -> float:
    """Mean KL(Q || P_d) over the transfer set at temperature ``T``."""
    from .gist import gist_batch
    T = ts.T if T is None else T
    out = gist_batch(model, [(r.id, r.words) for r in ts.records], T)
    return float(np.mean([distill_loss(r.q, g.weights) - entropy(r.q) for r, g in zip(ts.records, out)]))
