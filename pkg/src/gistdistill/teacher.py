"""Pointer-generator summariser used as the attention teacher.

Encoder: word+char representation into a stacked BiLSTM. Decoder: stacked
LSTM fed with the previous word vector, additive attention over encoder
states, a vocabulary head over [s; c], and a soft switch between generating
and copying.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import ParamSet, Tensor, load_checkpoint, save_checkpoint
from .autodiff import nn
from .autodiff import tensor as F
from .textio import (EOS_ID, PAD_ID, SOS_ID, UNK_ID, ArticlePair, CharVocab, Vocabulary,
                     WordReprConfig, init_word_repr, word_repr)
from .training import OptimConfig, batches, train_steps

log = logging.getLogger("gistdistill")


@dataclass
class TeacherConfig:
    word_dim: int = 300
    char_dim: int = 16
    n_filters: int = 100
    width: int = 5
    hidden: int = 256
    dec_hidden: int = 256
    attn_dim: int = 256
    enc_layers: int = 2
    dec_layers: int = 2
    max_src: int = 400
    max_tgt: int = 100
    dropout: float = 0.35
    freeze_words: bool = False
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    clip: float = 2.0
    batch_size: int = 16
    steps: int = 2000
    seed: int = 0
    log_every: int = 50
    target_nll: float = 0.0

    @property
    def repr(self) -> WordReprConfig:
        return WordReprConfig(self.word_dim, self.char_dim, self.n_filters, self.width,
                              self.freeze_words)

    @property
    def optim(self) -> OptimConfig:
        return OptimConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2, clip=self.clip)


DESK_TEACHER = dict(word_dim=32, char_dim=8, n_filters=16, hidden=32, dec_hidden=32,
                    attn_dim=32, max_src=150, max_tgt=12, lr=1e-2, batch_size=32,
                    dropout=0.0, steps=300)


@dataclass
class EncoderStates:
    h: Tensor                      # (B, m, 2H)
    mask: np.ndarray               # (B, m) bool
    finals: list                   # per layer (fwd_final, bwd_final)


@dataclass
class DecoderStep:
    s: np.ndarray
    logits: np.ndarray
    attention: np.ndarray
    context: np.ndarray
    p_vocab: np.ndarray
    p_gen: float
    p_final: np.ndarray            # over vocab + per-example OOV extension
    oov: list = field(default_factory=list)


@dataclass
class AttentionRecord:
    id: str
    logits: np.ndarray             # (T_y, m)
    mode: str = "teacher-forced"

    def to_json(self) -> dict:
        return {"id": self.id, "mode": self.mode, "logits": self.logits.tolist()}


# ---------------------------------------------------------------- pure formulas

def attention(s: Tensor, h: Tensor, w_enc: Tensor, w_dec: Tensor, b_a: Tensor, v_a: Tensor,
              mask: np.ndarray | None = None):
    """Additive attention d_i = v_a . tanh(W_enc h_i + W_dec s_t + b_a).

    ``s`` is (B, Ty, Hd), ``h`` (B, m, 2H). Returns logits (B, Ty, m), the
    softmax over source positions and the context vectors (B, Ty, 2H).
    """
    eh = F.matmul(h, w_enc)                                  # (B, m, A)
    ds = F.matmul(s, w_dec)                                  # (B, Ty, A)
    B, m, A = eh.shape
    Ty = ds.shape[1]
    pre = F.reshape(eh, (B, 1, m, A)) + F.reshape(ds, (B, Ty, 1, A)) + b_a
    d = F.reshape(F.matmul(F.tanh(pre), F.reshape(v_a, (A, 1))), (B, Ty, m))
    amask = None if mask is None else np.asarray(mask, bool)[:, None, :]
    a = F.softmax(d, axis=-1, mask=amask)
    c = F.matmul(a, h)
    return d, a, c


def extend_vocab(tokens: Sequence[str], vocab: Vocabulary) -> tuple[list[int], list[str]]:
    """Ids over vocab + temporary ids for this example's out-of-vocabulary tokens."""
    oov: list[str] = []
    ids = []
    for t in tokens:
        if t in vocab:
            ids.append(vocab.id(t))
        else:
            if t not in oov:
                oov.append(t)
            ids.append(len(vocab) + oov.index(t))
    return ids, oov


def copy_distribution(a: np.ndarray, source_ids: Sequence[int], size: int | None = None) -> np.ndarray:
    """P_c(w) = sum of attention on positions holding w; zero elsewhere."""
    a = np.asarray(a, dtype=np.float64)
    ids = np.asarray(source_ids, dtype=np.int64)
    if a.shape != ids.shape:
        raise ValueError(f"attention length {a.shape} != source length {ids.shape}")
    out = np.zeros(size if size is not None else int(ids.max()) + 1)
    np.add.at(out, ids, a)
    return out


def mix_distributions(p_gen: float, p_vocab: np.ndarray, p_copy: np.ndarray) -> np.ndarray:
    """P(w) = p_gen P_v(w) + (1 - p_gen) P_c(w) over the extended vocabulary."""
    if not 0.0 <= p_gen <= 1.0:
        raise ValueError(f"p_gen must lie in [0, 1], got {p_gen}")
    n = max(len(p_vocab), len(p_copy))
    pv = np.zeros(n)
    pv[:len(p_vocab)] = p_vocab
    pc = np.zeros(n)
    pc[:len(p_copy)] = p_copy
    return p_gen * pv + (1.0 - p_gen) * pc


# ---------------------------------------------------------------- batching

@dataclass
class Batch:
    ids: list[str]
    src: np.ndarray          # (B, m) in-vocab ids, UNK for OOV
    src_ext: np.ndarray      # (B, m) extended ids
    src_tokens: list
    src_mask: np.ndarray
    dec_in: np.ndarray       # (B, Ty) in-vocab ids starting with SOS
    target: np.ndarray       # (B, Ty) extended ids ending with EOS
    tgt_mask: np.ndarray
    oov: list


def make_batch(pairs: Sequence[ArticlePair], vocab: Vocabulary, max_src: int, max_tgt: int) -> Batch:
    B = len(pairs)
    srcs = [p.source[:max_src] for p in pairs]
    tgts = [p.summary[:max_tgt] for p in pairs]
    m = max(len(s) for s in srcs)
    Ty = max(len(t) for t in tgts) + 1
    V = len(vocab)
    src = np.full((B, m), PAD_ID, dtype=np.int64)
    src_ext = np.full((B, m), PAD_ID, dtype=np.int64)
    dec_in = np.full((B, Ty), PAD_ID, dtype=np.int64)
    target = np.full((B, Ty), PAD_ID, dtype=np.int64)
    src_mask = np.zeros((B, m), dtype=bool)
    tgt_mask = np.zeros((B, Ty), dtype=bool)
    oovs = []
    for b, (s, t) in enumerate(zip(srcs, tgts)):
        ext, oov = extend_vocab(s, vocab)
        oovs.append(oov)
        src[b, :len(s)] = vocab.encode(s)
        src_ext[b, :len(s)] = ext
        src_mask[b, :len(s)] = True
        tid = []
        for w in t:
            if w in vocab:
                tid.append(vocab.id(w))
            elif w in oov:
                tid.append(V + oov.index(w))
            else:
                tid.append(UNK_ID)
        dec_in[b, :len(t) + 1] = [SOS_ID] + vocab.encode(t)
        target[b, :len(t) + 1] = tid + [EOS_ID]
        tgt_mask[b, :len(t) + 1] = True
    return Batch([p.id for p in pairs], src, src_ext, srcs, src_mask, dec_in, target, tgt_mask, oovs)


# ---------------------------------------------------------------- model

class PointerGenerator:
    prefix = "teacher"

    def __init__(self, cfg: TeacherConfig, vocab: Vocabulary, chars: CharVocab,
                 params: ParamSet | None = None, pretrained: np.ndarray | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.chars = chars
        if params is None:
            params = ParamSet()
            self._init(params, np.random.default_rng(cfg.seed), pretrained)
        self.params = params

    def _init(self, ps: ParamSet, rng, pretrained) -> None:
        c, p = self.cfg, self.prefix
        init_word_repr(ps, f"{p}.embed", c.repr, len(self.vocab), len(self.chars), rng, pretrained)
        nn.init_bilstm(ps, f"{p}.encoder", c.repr.out_dim, c.hidden, c.enc_layers, rng)
        nn.init_linear(ps, f"{p}.bridge", 2 * c.hidden * c.enc_layers, 2 * c.dec_hidden * c.dec_layers, rng)
        for layer in range(c.dec_layers):
            d_in = c.word_dim if layer == 0 else c.dec_hidden
            nn.init_lstm(ps, f"{p}.decoder.layer{layer}", d_in, c.dec_hidden, rng)
        ps.add(f"{p}.attn.W_enc", nn.uniform_init(rng, (2 * c.hidden, c.attn_dim), 2 * c.hidden))
        ps.add(f"{p}.attn.W_dec", nn.uniform_init(rng, (c.dec_hidden, c.attn_dim), c.dec_hidden))
        ps.add(f"{p}.attn.b_a", np.zeros(c.attn_dim))
        ps.add(f"{p}.attn.v_a", nn.uniform_init(rng, (c.attn_dim,), c.attn_dim))
        ctx = c.dec_hidden + 2 * c.hidden
        nn.init_linear(ps, f"{p}.vocab_out", ctx, len(self.vocab), rng)
        nn.init_linear(ps, f"{p}.gen", ctx + c.word_dim, 1, rng)

    # -- pieces

    def encode(self, batch: Batch, training: bool = False, rng=None) -> EncoderStates:
        if batch.src.shape[1] == 0 or not batch.src_mask.any(axis=1).all():
            raise ValueError("cannot encode an empty source")
        if batch.src.shape[1] > self.cfg.max_src:
            raise ValueError(f"source length {batch.src.shape[1]} exceeds max_src={self.cfg.max_src}")
        c, p = self.cfg, self.prefix
        x = word_repr(self.params, f"{p}.embed", c.repr, batch.src, batch.src_tokens, self.chars)
        h, finals = nn.bilstm(self.params, f"{p}.encoder", x, batch.src_mask, c.enc_layers,
                              c.dropout, rng, training)
        return EncoderStates(h, batch.src_mask, finals)

    def initial_state(self, enc: EncoderStates) -> list[tuple[Tensor, Tensor]]:
        c = self.cfg
        flat = F.concat([t for pair in enc.finals for t in pair], axis=-1)
        z = F.tanh(nn.linear(self.params, f"{self.prefix}.bridge", flat))
        H = c.dec_hidden
        return [(z[:, 2 * k * H:(2 * k + 1) * H], z[:, (2 * k + 1) * H:(2 * k + 2) * H])
                for k in range(c.dec_layers)]

    def _word_vectors(self, ids: np.ndarray) -> Tensor:
        words = self.params[f"{self.prefix}.embed.words"]
        if self.cfg.freeze_words:
            words = words.detach()
        return F.embedding(words, ids)

    def attend(self, s: Tensor, enc: EncoderStates):
        p = self.prefix
        ps = self.params
        return attention(s, enc.h, ps[f"{p}.attn.W_enc"], ps[f"{p}.attn.W_dec"],
                         ps[f"{p}.attn.b_a"], ps[f"{p}.attn.v_a"], enc.mask)

    def heads(self, s: Tensor, c: Tensor, e: Tensor):
        sc = F.concat([s, c], axis=-1)
        p_vocab = F.softmax(nn.linear(self.params, f"{self.prefix}.vocab_out", sc), axis=-1)
        p_gen = F.sigmoid(nn.linear(self.params, f"{self.prefix}.gen", F.concat([sc, e], axis=-1)))
        return p_vocab, p_gen

    def teacher_forced(self, batch: Batch, training: bool = False, rng=None):
        """Decoder pass over the reference summary. Returns (logits, a, p_vocab, p_gen)."""
        c = self.cfg
        enc = self.encode(batch, training, rng)
        init = self.initial_state(enc)
        e = self._word_vectors(batch.dec_in)
        out = e
        for layer, (h0, c0) in enumerate(init):
            inp = F.dropout(out, c.dropout, rng, training)
            out = nn.lstm_layer(self.params, f"{self.prefix}.decoder.layer{layer}", inp,
                                batch.tgt_mask, h0, c0)
        d, a, ctx = self.attend(out, enc)
        p_vocab, p_gen = self.heads(out, ctx, e)
        return d, a, p_vocab, p_gen

    def loss(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        """Mean over target positions of -log P(y_t)."""
        _, a, p_vocab, p_gen = self.teacher_forced(batch, training, rng)
        V = len(self.vocab)
        B, Ty = batch.target.shape
        in_vocab = batch.target < V
        bi, ti = np.nonzero(batch.tgt_mask)
        yi = np.where(in_vocab, batch.target, UNK_ID)[bi, ti]
        pv = p_vocab[bi, ti, yi] * in_vocab[bi, ti].astype(float)
        match = (batch.src_ext[:, None, :] == batch.target[:, :, None]) & batch.src_mask[:, None, :]
        pc = F.tsum(a * match.astype(float), axis=-1)[bi, ti]
        g = F.reshape(p_gen, (B, Ty))[bi, ti]
        prob = g * pv + (1.0 - g) * pc
        return F.mean(-F.log(prob))

    # -- stepwise decoding

    def start(self, pair: ArticlePair):
        batch = make_batch([pair], self.vocab, self.cfg.max_src, self.cfg.max_tgt)
        enc = self.encode(batch)
        state = [(h.data, c.data) for h, c in self.initial_state(enc)]
        return batch, enc, state

    def decode_step(self, y_prev: int, state, enc: EncoderStates, batch: Batch,
                    force_p_gen: float | None = None):
        """One decoder step for a single example; returns (DecoderStep, new state)."""
        p = self.prefix
        if y_prev >= len(self.vocab):
            y_prev = UNK_ID
        e = self._word_vectors(np.array([y_prev]))
        x = e
        new_state = []
        for layer, (h, c) in enumerate(state):
            h, c = nn.lstm_step(x, h, c, self.params[f"{p}.decoder.layer{layer}.W_ih"],
                                self.params[f"{p}.decoder.layer{layer}.W_hh"],
                                self.params[f"{p}.decoder.layer{layer}.b"])
            new_state.append((h.data, c.data))
            x = h
        s = F.reshape(x, (1, 1, -1))
        d, a, ctx = self.attend(s, enc)
        p_vocab, p_gen = self.heads(s, ctx, F.reshape(e, (1, 1, -1)))
        g = float(p_gen.data.reshape(())) if force_p_gen is None else force_p_gen
        oov = batch.oov[0]
        m = int(batch.src_mask[0].sum())
        att = a.data[0, 0, :m]
        pc = copy_distribution(att, batch.src_ext[0, :m], len(self.vocab) + len(oov))
        final = mix_distributions(g, p_vocab.data[0, 0], pc)
        step = DecoderStep(s.data[0, 0], d.data[0, 0, :m], att, ctx.data[0, 0],
                           p_vocab.data[0, 0], g, final, oov)
        return step, new_state

    def greedy(self, pair: ArticlePair, max_len: int | None = None):
        """Argmax decoding until EOS. Returns (tokens, per-step DecoderSteps)."""
        max_len = max_len or self.cfg.max_tgt
        batch, enc, state = self.start(pair)
        y = SOS_ID
        tokens, steps = [], []
        V = len(self.vocab)
        for _ in range(max_len + 1):
            step, state = self.decode_step(y, state, enc, batch)
            steps.append(step)
            y = int(np.argmax(step.p_final))
            if y == EOS_ID:
                break
            tokens.append(self.vocab.token(y) if y < V else step.oov[y - V])
        return tokens, steps

    # -- persistence

    def save(self, path, history: list[float] | None = None) -> str:
        meta = {"kind": "teacher", "config": asdict(self.cfg), "vocab": self.vocab.itos,
                "chars": self.chars.chars, "history": history or []}
        return save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path) -> PointerGenerator:
        params, meta = load_checkpoint(path)
        if meta.get("kind") != "teacher":
            raise ValueError(f"{path}: not a teacher checkpoint (kind={meta.get('kind')!r})")
        return cls(TeacherConfig(**meta["config"]), Vocabulary(meta["vocab"]),
                   CharVocab(meta["chars"]), params)


def train_teacher(pairs: Sequence[ArticlePair], cfg: TeacherConfig, vocab: Vocabulary,
                  chars: CharVocab, pretrained: np.ndarray | None = None):
    """Teacher-forced NLL training. Returns (model, loss curve)."""
    if not pairs:
        raise ValueError("empty training corpus")
    model = PointerGenerator(cfg, vocab, chars, pretrained=pretrained)
    rng = np.random.default_rng(cfg.seed + 1)
    stream = batches(len(pairs), cfg.batch_size, rng)
    cache: dict[tuple, Batch] = {}

    def loss_fn(idx):
        key = tuple(sorted(idx))
        if key not in cache:
            if len(cache) > 4096:
                cache.clear()
            cache[key] = make_batch([pairs[i] for i in key], vocab, cfg.max_src, cfg.max_tgt)
        return model.loss(cache[key], training=True, rng=rng)

    stop = None
    if cfg.target_nll > 0:
        window: list[float] = []

        def stop(step, value):
            window.append(value)
            return len(window) >= 10 and max(window[-10:]) < cfg.target_nll

    trainable = [n for n in model.params.names()
                 if not (cfg.freeze_words and n.endswith(".embed.words"))]
    curve = train_steps(model.params, loss_fn, stream, cfg.steps, cfg.optim, "teacher",
                        cfg.log_every, trainable=trainable, on_step=stop)
    return model, curve


def record_attention(model: PointerGenerator, pairs: Sequence[ArticlePair],
                     mode: str = "teacher-forced", batch_size: int = 32) -> list[AttentionRecord]:
    """Raw attention logits d_it for each example.

    Teacher-forced mode keeps one row per reference summary token (the final
    EOS-prediction step is dropped); greedy mode keeps one row per emitted
    token, or the first step if EOS comes first.
    """
    records = []
    if mode == "teacher-forced":
        for k in range(0, len(pairs), batch_size):
            chunk = list(pairs[k:k + batch_size])
            batch = make_batch(chunk, model.vocab, model.cfg.max_src, model.cfg.max_tgt)
            d, _, _, _ = model.teacher_forced(batch)
            for b, pair in enumerate(chunk):
                m = int(batch.src_mask[b].sum())
                ty = int(batch.tgt_mask[b].sum()) - 1
                records.append(AttentionRecord(pair.id, d.data[b, :ty, :m].copy(), mode))
    elif mode == "greedy":
        for pair in pairs:
            tokens, steps = model.greedy(pair)
            keep = steps[:max(len(tokens), 1)]
            records.append(AttentionRecord(pair.id, np.stack([s.logits for s in keep]), mode))
    else:
        raise ValueError(f"unknown attention mode {mode!r}")
    return records
