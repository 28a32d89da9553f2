"""The gist detector: word repr -> BiLSTM -> self-attention + residual -> MLP -> softmax over positions."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .autodiff import ParamSet, Tensor, load_checkpoint, save_checkpoint
from .autodiff import nn
from .autodiff import tensor as F
from .textio import PAD_ID, CharVocab, Vocabulary, WordReprConfig, init_word_repr, word_repr


@dataclass
class StudentConfig:
    word_dim: int = 100
    char_dim: int = 16
    n_filters: int = 50
    width: int = 5
    hidden: int = 128
    heads: int = 4
    head_dim: int = 64
    mlp_hidden: int = 128
    dropout: float = 0.35
    train_T: float = 4.0
    infer_T: float = 1.0
    max_len: int = 400
    freeze_words: bool = False
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    clip: float = 2.0
    batch_size: int = 16
    steps: int = 2000
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        if self.heads * self.head_dim != 2 * self.hidden:
            raise ValueError(f"heads*head_dim ({self.heads}*{self.head_dim}) must equal "
                             f"2*hidden ({2 * self.hidden})")

    @property
    def repr(self) -> WordReprConfig:
        return WordReprConfig(self.word_dim, self.char_dim, self.n_filters, self.width,
                              self.freeze_words)


DESK_STUDENT = dict(word_dim=16, char_dim=8, n_filters=8, hidden=16, heads=2, head_dim=16,
                    mlp_hidden=16, max_len=150, lr=1e-2, batch_size=32, dropout=0.0,
                    steps=400)


@dataclass
class GistWeights:
    id: str
    tokens: list[str]
    weights: np.ndarray
    T: float

    def to_json(self) -> dict:
        return {"id": self.id, "tokens": self.tokens, "weights": [float(w) for w in self.weights]}


def init_self_attention(ps: ParamSet, name: str, d: int, heads: int, head_dim: int, rng) -> None:
    for proj in ("q", "k", "v"):
        nn.init_linear(ps, f"{name}.{proj}", d, heads * head_dim, rng, bias=False)
    nn.init_linear(ps, f"{name}.o", heads * head_dim, d, rng)


def self_attention_block(ps: ParamSet, name: str, U: Tensor, heads: int, mask=None) -> Tensor:
    """U + MultiHead(U): per head softmax(Q K^T / sqrt(d_h)) V, concat, output projection.

    ``mask`` (B, m) hides padded keys.
    """
    B, m, d = U.shape
    inner = ps[f"{name}.q.W"].shape[1]
    if inner % heads:
        raise ValueError(f"projection width {inner} not divisible by {heads} heads")
    dh = inner // heads

    def split(x):
        return F.transpose(F.reshape(x, (B, m, heads, dh)), (0, 2, 1, 3))

    q = split(nn.linear(ps, f"{name}.q", U))
    k = split(nn.linear(ps, f"{name}.k", U))
    v = split(nn.linear(ps, f"{name}.v", U))
    scores = F.matmul(q, F.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
    kmask = None if mask is None else np.asarray(mask, bool)[:, None, None, :]
    att = F.softmax(scores, axis=-1, mask=kmask)
    ctx = F.reshape(F.transpose(F.matmul(att, v), (0, 2, 1, 3)), (B, m, inner))
    return nn.linear(ps, f"{name}.o", ctx) + U


@dataclass
class TokenBatch:
    ids: list[str]
    word_ids: np.ndarray
    tokens: list
    mask: np.ndarray


def make_token_batch(ids: Sequence[str], docs: Sequence[Sequence[str]], vocab: Vocabulary,
                     max_len: int) -> TokenBatch:
    docs = [list(d[:max_len]) for d in docs]
    if any(len(d) == 0 for d in docs):
        raise ValueError("empty document")
    T = max(len(d) for d in docs)
    word_ids = np.full((len(docs), T), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(docs), T), dtype=bool)
    for b, d in enumerate(docs):
        word_ids[b, :len(d)] = vocab.encode(d)
        mask[b, :len(d)] = True
    return TokenBatch(list(ids), word_ids, docs, mask)


class GistDetector:
    def __init__(self, cfg: StudentConfig, vocab: Vocabulary, chars: CharVocab,
                 params: ParamSet | None = None, prefix: str = "gist", seed: int | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.chars = chars
        self.prefix = prefix
        if params is None:
            params = ParamSet()
        if f"{prefix}.embed.words" not in params:
            self._init(params, np.random.default_rng(cfg.seed if seed is None else seed))
        self.params = params

    def _init(self, ps: ParamSet, rng) -> None:
        c, p = self.cfg, self.prefix
        init_word_repr(ps, f"{p}.embed", c.repr, len(self.vocab), len(self.chars), rng)
        nn.init_bilstm(ps, f"{p}.bilstm", c.repr.out_dim, c.hidden, 1, rng)
        init_self_attention(ps, f"{p}.selfattn", 2 * c.hidden, c.heads, c.head_dim, rng)
        nn.init_mlp(ps, f"{p}.mlp", [2 * c.hidden, c.mlp_hidden, 1], rng)

    def param_names(self) -> list[str]:
        return self.params.subset(f"{self.prefix}.")

    def num_parameters(self) -> int:
        return int(sum(self.params[n].data.size for n in self.param_names()))

    def batch(self, ids, docs) -> TokenBatch:
        return make_token_batch(ids, docs, self.vocab, self.cfg.max_len)

    def logits(self, batch: TokenBatch, training: bool = False, rng=None) -> Tensor:
        """Per-position scores (B, m) before the softmax."""
        c, p = self.cfg, self.prefix
        x = word_repr(self.params, f"{p}.embed", c.repr, batch.word_ids, batch.tokens, self.chars)
        U, _ = nn.bilstm(self.params, f"{p}.bilstm", x, batch.mask, 1, c.dropout, rng, training)
        U = self_attention_block(self.params, f"{p}.selfattn", U, c.heads, batch.mask)
        z = nn.mlp(self.params, f"{p}.mlp", U, 2, c.dropout, rng, training)
        return F.reshape(z, batch.mask.shape)

    def weights(self, batch: TokenBatch, T: float | None = None, training: bool = False,
                rng=None) -> Tensor:
        """Importance distribution over each example's positions; padding gets zero."""
        T = self.cfg.infer_T if T is None else T
        return F.softmax(self.logits(batch, training, rng), axis=-1, T=T, mask=batch.mask)

    def save(self, path, history=None, extra: dict | None = None) -> str:
        state = {n: self.params[n].data for n in self.param_names()}
        meta = {"kind": "student", "prefix": self.prefix, "config": asdict(self.cfg),
                "vocab": self.vocab.itos, "chars": self.chars.chars, "history": history or [],
                **(extra or {})}
        return save_checkpoint(path, state, meta)

    @classmethod
    def load(cls, path) -> GistDetector:
        params, meta = load_checkpoint(path)
        if meta.get("kind") != "student":
            raise ValueError(f"{path}: not a student checkpoint (kind={meta.get('kind')!r})")
        return cls(StudentConfig(**meta["config"]), Vocabulary(meta["vocab"]),
                   CharVocab(meta["chars"]), params, prefix=meta.get("prefix", "gist"))

    def copy_into(self, params: ParamSet, prefix: str | None = None) -> GistDetector:
        """Clone this detector's parameters into another ParamSet."""
        prefix = prefix or self.prefix
        for n in self.param_names():
            params.add(prefix + n[len(self.prefix):], self.params[n].data.copy())
        return GistDetector(self.cfg, self.vocab, self.chars, params, prefix)


def gist_batch(model: GistDetector, examples: Sequence[tuple[str, Sequence[str]]],
               T: float | None = None, batch_size: int = 32) -> list[GistWeights]:
    if not examples:
        raise ValueError("gist_batch needs at least one example")
    T = model.cfg.infer_T if T is None else T
    out = []
    for k in range(0, len(examples), batch_size):
        chunk = examples[k:k + batch_size]
        batch = model.batch([e[0] for e in chunk], [e[1] for e in chunk])
        w = model.weights(batch, T).data
        for b, (eid, _) in enumerate(chunk):
            m = len(batch.tokens[b])
            out.append(GistWeights(eid, batch.tokens[b], w[b, :m].copy(), T))
    return out


def gist_forward(model: GistDetector, tokens: Sequence[str], T: float | None = None,
                 id: str = "") -> GistWeights:
    if not tokens:
        raise ValueError("gist_forward needs a non-empty token sequence")
    return gist_batch(model, [(id, list(tokens))], T)[0]
