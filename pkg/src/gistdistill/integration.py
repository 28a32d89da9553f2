"""Blending gist weights into host models, and the BiLSTM document classifier.

Modes: ``baseline`` (plain BiLSTM), ``+GD`` (distilled detector blended into
the context vector) and ``+NP`` (same detector architecture, random init).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import ParamSet, Tensor, load_checkpoint, save_checkpoint
from .autodiff import nn
from .autodiff import tensor as F
from .gist import GistDetector, StudentConfig, make_token_batch
from .textio import CharVocab, LabeledDoc, Vocabulary, WordReprConfig, init_word_repr, word_repr
from .training import OptimConfig, batches, train_steps

MODES = ("baseline", "+GD", "+NP")


def blend_context(v_c, q, d, lam: float):
    """(1 - lam) v_c + lam * sum_i d_i q_i.

    Works on numpy arrays or tensors; ``q`` is (..., T, D), ``d`` (..., T).
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if isinstance(v_c, Tensor) or isinstance(q, Tensor) or isinstance(d, Tensor):
        v_c, q, d = F.as_tensor(v_c), F.as_tensor(q), F.as_tensor(d)
        if q.shape[-1] != v_c.shape[-1] or q.shape[:-1] != d.shape:
            raise ValueError(f"dimension mismatch: v_c {v_c.shape}, q {q.shape}, d {d.shape}")
        pooled = F.tsum(q * F.reshape(d, d.shape + (1,)), axis=-2)
        return v_c * (1.0 - lam) + pooled * lam
    v_c, q, d = (np.asarray(a, dtype=np.float64) for a in (v_c, q, d))
    if q.shape[-1] != v_c.shape[-1] or q.shape[:-1] != d.shape:
        raise ValueError(f"dimension mismatch: v_c {v_c.shape}, q {q.shape}, d {d.shape}")
    return (1.0 - lam) * v_c + lam * np.einsum("...t,...td->...d", d, q)


def blend_scores(r, d, lam: float) -> np.ndarray:
    """(1 - lam) r_i + lam d_i for extraction-style per-position scores."""
    r, d = np.asarray(r, dtype=np.float64), np.asarray(d, dtype=np.float64)
    if r.shape != d.shape:
        raise ValueError(f"length mismatch: scores {r.shape} vs weights {d.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return (1.0 - lam) * r + lam * d


@dataclass
class ClassifierConfig:
    word_dim: int = 300
    hidden: int = 256
    layers: int = 2
    mlp_layers: int = 2
    mlp_hidden: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    clip: float = 2.0
    dropout: float = 0.35
    epochs: int = 6
    batch_size: int = 16
    lam: float = 0.5
    mode: str = "baseline"
    freeze_gist: bool = False
    gist_T: float = 1.0
    max_len: int = 400
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")


DESK_CLASSIFIER = dict(word_dim=16, hidden=16, mlp_hidden=16, max_len=150, lr=1e-2, dropout=0.0,
                       epochs=4)


@dataclass
class ContextPipelineOutput:
    q: Tensor      # (B, T, 2H)
    v_c: Tensor    # (B, 2H)


class DocClassifier:
    prefix = "clf"

    def __init__(self, cfg: ClassifierConfig, vocab: Vocabulary, labels: Sequence[str],
                 gist: GistDetector | None = None, params: ParamSet | None = None):
        if cfg.mode == "baseline" and gist is not None:
            raise ValueError("baseline mode takes no gist detector")
        if cfg.mode != "baseline" and gist is None:
            raise ValueError(f"mode {cfg.mode} needs a gist detector")
        self.cfg = cfg
        self.vocab = vocab
        self.labels = list(labels)
        if params is None:
            params = ParamSet()
            self._init(params, np.random.default_rng(cfg.seed))
        self.params = params
        self.gist = None
        if gist is not None:
            if "gist.embed.words" in params:
                self.gist = GistDetector(gist.cfg, gist.vocab, gist.chars, params, "gist")
            else:
                self.gist = gist.copy_into(params, "gist")

    @property
    def repr(self) -> WordReprConfig:
        return WordReprConfig(self.cfg.word_dim, n_filters=0)

    def _init(self, ps: ParamSet, rng) -> None:
        c, p = self.cfg, self.prefix
        init_word_repr(ps, f"{p}.embed", self.repr, len(self.vocab), 0, rng)
        nn.init_bilstm(ps, f"{p}.bilstm", c.word_dim, c.hidden, c.layers, rng)
        sizes = [2 * c.hidden] + [c.mlp_hidden] * (c.mlp_layers - 1) + [len(self.labels)]
        nn.init_mlp(ps, f"{p}.mlp", sizes, rng)

    def context_pipeline(self, ids, docs, training=False, rng=None) -> ContextPipelineOutput:
        """q_i = top BiLSTM outputs; v_c = [final forward ; final backward] of the top layer."""
        c = self.cfg
        batch = make_token_batch(ids, docs, self.vocab, c.max_len)
        x = word_repr(self.params, f"{self.prefix}.embed", self.repr, batch.word_ids, batch.tokens, None)
        q, finals = nn.bilstm(self.params, f"{self.prefix}.bilstm", x, batch.mask, c.layers,
                              c.dropout, rng, training)
        fwd, bwd = finals[-1]
        return ContextPipelineOutput(q, F.concat([fwd, bwd], axis=-1))

    def gist_weights(self, ids, docs, training=False, rng=None) -> Tensor:
        gbatch = self.gist.batch(ids, docs)
        w = self.gist.weights(gbatch, self.cfg.gist_T, training, rng)
        if self.cfg.freeze_gist:
            w = w.detach()
        return w

    def logits(self, ids, docs, training=False, rng=None, lam: float | None = None) -> Tensor:
        c = self.cfg
        lam = c.lam if lam is None else lam
        out = self.context_pipeline(ids, docs, training, rng)
        v = out.v_c
        if self.gist is not None:
            v = blend_context(v, out.q, self.gist_weights(ids, docs, training, rng), lam)
        return nn.mlp(self.params, f"{self.prefix}.mlp", v, c.mlp_layers, c.dropout, rng, training)

    def predict_proba(self, ids, docs, lam: float | None = None, batch_size: int = 64) -> np.ndarray:
        out = []
        for k in range(0, len(docs), batch_size):
            z = self.logits(ids[k:k + batch_size], docs[k:k + batch_size], lam=lam)
            out.append(F.softmax(z, axis=-1).data)
        return np.concatenate(out)

    def accuracy(self, docs: Sequence[LabeledDoc]) -> float:
        p = self.predict_proba([d.id for d in docs], [d.tokens for d in docs])
        y = np.array([self.labels.index(d.label) for d in docs])
        return float((p.argmax(axis=1) == y).mean())

    def trainable(self) -> list[str]:
        names = self.params.names()
        if self.cfg.freeze_gist:
            names = [n for n in names if not n.startswith("gist.")]
        return names

    def save(self, path, metrics: dict | None = None) -> str:
        meta = {"kind": "classifier", "config": asdict(self.cfg), "vocab": self.vocab.itos,
                "labels": self.labels, "metrics": metrics or {}}
        if self.gist is not None:
            meta["gist"] = {"config": asdict(self.gist.cfg), "vocab": self.gist.vocab.itos,
                            "chars": self.gist.chars.chars}
        return save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path) -> DocClassifier:
        params, meta = load_checkpoint(path)
        if meta.get("kind") != "classifier":
            raise ValueError(f"{path}: not a classifier checkpoint")
        gist = None
        if "gist" in meta:
            g = meta["gist"]
            gist = GistDetector(StudentConfig(**g["config"]), Vocabulary(g["vocab"]),
                                CharVocab(g["chars"]), params, "gist")
        return cls(ClassifierConfig(**meta["config"]), Vocabulary(meta["vocab"]), meta["labels"],
                   gist, params)


def classify(model: DocClassifier, doc: Sequence[str], lam: float | None = None) -> np.ndarray:
    """Label distribution for one tokenised document."""
    if lam is not None and model.gist is None:
        raise ValueError("lambda given but the classifier has no gist detector")
    return model.predict_proba(["doc"], [list(doc)], lam=lam)[0]


def train_classifier(train: Sequence[LabeledDoc], cfg: ClassifierConfig, vocab: Vocabulary,
                     gist: GistDetector | None = None, dev: Sequence[LabeledDoc] = (),
                     test: Sequence[LabeledDoc] = ()):
    """Train for ``cfg.epochs`` epochs; returns (model, metrics report)."""
    if not train:
        raise ValueError("empty training corpus")
    labels = sorted({d.label for d in train})
    for name, split in (("dev", dev), ("test", test)):
        extra = {d.label for d in split} - set(labels)
        if extra:
            raise ValueError(f"{name} split has labels unseen in training: {sorted(extra)}")
    if cfg.mode == "+NP":
        gist = GistDetector(gist.cfg, gist.vocab, gist.chars, seed=cfg.seed + 7919)
    model = DocClassifier(cfg, vocab, labels, gist)
    rng = np.random.default_rng(cfg.seed + 1)
    stream = batches(len(train), cfg.batch_size, rng)
    y_all = np.array([labels.index(d.label) for d in train])

    def loss_fn(idx):
        z = model.logits([train[i].id for i in idx], [train[i].tokens for i in idx], True, rng)
        logp = F.log_softmax(z, axis=-1)
        return -F.mean(logp[np.arange(len(idx)), y_all[idx]])

    steps_per_epoch = int(np.ceil(len(train) / cfg.batch_size))
    opt = OptimConfig(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, clip=cfg.clip)
    from .autodiff import AdamState
    state = AdamState(lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2)
    epochs = []
    for epoch in range(1, cfg.epochs + 1):
        curve = train_steps(model.params, loss_fn, stream, steps_per_epoch, opt,
                            f"classifier[{cfg.mode}]", cfg.log_every, model.trainable(), state)
        row = {"epoch": epoch, "train_loss": float(np.mean(curve)),
               "train_accuracy": model.accuracy(train)}
        if dev:
            row["dev_accuracy"] = model.accuracy(dev)
        epochs.append(row)
    report = {"mode": cfg.mode, "seed": cfg.seed, "epochs": epochs,
              "test_accuracy": model.accuracy(test) if test else None}
    return model, report


def metrics_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)
