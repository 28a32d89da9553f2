import numpy as np
import pytest

from conftest import TINY_TEACHER, chars_for, toy_pairs, vocab_for
from gistdistill.autodiff import Tensor, softmax_t
from gistdistill.autodiff.gradcheck import check_params
from gistdistill.teacher import (AttentionRecord, PointerGenerator, TeacherConfig, attention,
                                 copy_distribution, extend_vocab, make_batch, mix_distributions,
                                 record_attention, train_teacher)
from gistdistill.textio import ArticlePair, EOS_ID, build_vocab


def _model(pairs, seed=0, **kw):
    cfg = TeacherConfig(**{**TINY_TEACHER, **kw}, seed=seed)
    return PointerGenerator(cfg, vocab_for(pairs), chars_for(pairs))


def _randomise(model, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    for n in model.params.names():
        model.params[n].data = rng.uniform(-scale, scale, model.params[n].shape)


# ---------------------------------------------------------------- attention formula

def _att_args(rng, m=3, Hd=4, H2=6, A=5):
    s = rng.normal(size=(1, 1, Hd))
    h = rng.normal(size=(1, m, H2))
    return s, h, rng.normal(size=(H2, A)), rng.normal(size=(Hd, A)), rng.normal(size=A), rng.normal(size=A)


def test_attention_identical_states_uniform():
    rng = np.random.default_rng(0)
    s, h, we, wd, b, v = _att_args(rng)
    h[:] = h[:, :1]
    _, a, c = attention(*(Tensor(x) for x in (s, h, we, wd, b, v)))
    np.testing.assert_allclose(a.data, 1 / 3, atol=1e-15)
    np.testing.assert_allclose(c.data[0, 0], h[0, 0], atol=1e-14)


def test_attention_saturates_to_one_hot():
    m, k = 5, 3
    h = np.zeros((1, m, 2))
    h[0, :, 1] = np.arange(m)
    h[0, k, 0] = 10.0
    we = np.array([[1.0], [0.0]])
    _, a, c = attention(Tensor(np.zeros((1, 1, 2))), Tensor(h), Tensor(we), Tensor(np.zeros((2, 1))),
                        Tensor(np.zeros(1)), Tensor(np.array([20.0])))
    onehot = np.eye(m)[k]
    np.testing.assert_allclose(a.data[0, 0], onehot, atol=1e-6)
    np.testing.assert_allclose(c.data[0, 0], h[0, k], atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_attention_matches_direct_formula(seed):
    rng = np.random.default_rng(seed)
    s, h, we, wd, b, v = _att_args(rng)
    d, a, c = attention(*(Tensor(x) for x in (s, h, we, wd, b, v)))
    dd = np.array([v @ np.tanh(we.T @ h[0, i] + wd.T @ s[0, 0] + b) for i in range(3)])
    aa = np.exp(dd) / np.exp(dd).sum()
    np.testing.assert_allclose(d.data[0, 0], dd, atol=1e-10)
    np.testing.assert_allclose(a.data[0, 0], aa, atol=1e-10)
    np.testing.assert_allclose(c.data[0, 0], aa @ h[0], atol=1e-10)


def test_attention_permutation_covariant():
    rng = np.random.default_rng(4)
    s, h, we, wd, b, v = _att_args(rng, m=6)
    perm = rng.permutation(6)
    d1, _, c1 = attention(*(Tensor(x) for x in (s, h, we, wd, b, v)))
    d2, _, c2 = attention(*(Tensor(x) for x in (s, h[:, perm], we, wd, b, v)))
    np.testing.assert_allclose(d2.data[0, 0], d1.data[0, 0][perm], atol=1e-14)
    np.testing.assert_allclose(c2.data, c1.data, atol=1e-14)


def test_attention_two_projection_matrices_are_distinct():
    pairs = toy_pairs(2)
    model = _model(pairs)
    assert model.params["teacher.attn.W_enc"] is not model.params["teacher.attn.W_dec"]


# ---------------------------------------------------------------- copy and mixture

def test_copy_distribution_sums_repeated_tokens():
    pc = copy_distribution([0.2, 0.5, 0.3], [7, 9, 7], size=12)
    assert pc[7] == pytest.approx(0.5) and pc[9] == pytest.approx(0.5)
    assert pc[0] == 0.0 and pc[11] == 0.0
    assert abs(pc.sum() - 1) < 1e-15


def test_copy_distribution_length_check():
    with pytest.raises(ValueError):
        copy_distribution([0.5, 0.5], [1, 2, 3])


def test_mix_endpoints_exact():
    rng = np.random.default_rng(0)
    pv, pc = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(9))
    assert np.array_equal(mix_distributions(1.0, pv, pc), np.concatenate([pv, np.zeros(3)]))
    assert np.array_equal(mix_distributions(0.0, pv, pc), pc)
    with pytest.raises(ValueError):
        mix_distributions(1.5, pv, pc)


def test_extend_vocab_assigns_temporary_ids():
    v = build_vocab([["a", "b"]], 10)
    ids, oov = extend_vocab(["a", "zz", "b", "zz", "yy"], v)
    assert oov == ["zz", "yy"]
    assert ids == [v.id("a"), len(v), v.id("b"), len(v), len(v) + 1]


# ---------------------------------------------------------------- model

def test_encode_shapes():
    pair = ArticlePair("x", [f"w{k}" for k in range(7)], ["w1"])
    model = _model([pair], hidden=16)
    enc = model.encode(make_batch([pair], model.vocab, 40, 8))
    assert enc.h.shape == (1, 7, 32)


def test_encode_shape_at_published_hidden_size():
    pair = ArticlePair("x", [f"w{k}" for k in range(7)], ["w1"])
    cfg = TeacherConfig(word_dim=8, n_filters=4, char_dim=4)
    assert cfg.hidden == 256
    model = PointerGenerator(cfg, vocab_for([pair]), chars_for([pair]))
    enc = model.encode(make_batch([pair], model.vocab, 40, 8))
    assert enc.h.shape == (1, 7, 512)


def test_encode_rejects_empty_and_overlong():
    with pytest.raises(ValueError):
        ArticlePair("x", [], ["a"])
    pair = ArticlePair("x", ["a"] * 50, ["a"])
    model = _model([pair])
    with pytest.raises(ValueError):
        model.encode(make_batch([pair], model.vocab, 100, 8))


def test_decode_step_forced_gates():
    pairs = toy_pairs(3)
    pairs[0].source[2] = "unseen_token"
    model = _model(pairs[1:])
    _randomise(model)
    batch, enc, state = model.start(pairs[0])
    V = len(model.vocab)
    one, _ = model.decode_step(5, state, enc, batch, force_p_gen=1.0)
    zero, _ = model.decode_step(5, state, enc, batch, force_p_gen=0.0)
    n_oov = len(one.oov)
    assert "unseen_token" in one.oov and len(one.p_final) == V + n_oov
    np.testing.assert_array_equal(one.p_final[:V], one.p_vocab)
    assert np.all(one.p_final[V:] == 0.0)
    m = len(pairs[0].source)
    ext, _ = extend_vocab(pairs[0].source, model.vocab)
    np.testing.assert_array_equal(zero.p_final, copy_distribution(zero.attention, ext, V + n_oov))
    free, _ = model.decode_step(5, state, enc, batch)
    assert abs(free.p_final.sum() - 1) < 1e-6 and 0 < free.p_gen < 1
    assert free.logits.shape == (m,)


def test_teacher_forced_loss_matches_stepwise_decoding():
    pairs = toy_pairs(2, seed=3)
    model = _model(pairs)
    _randomise(model, 1)
    for pair in pairs:
        batch = make_batch([pair], model.vocab, 40, 8)
        fused = float(model.loss(batch).data)
        b, enc, state = model.start(pair)
        ys = list(b.target[0][b.tgt_mask[0]])
        prev = [int(b.dec_in[0, 0])] + [int(v) for v in b.dec_in[0, 1:len(ys)]]
        nll = []
        for y_prev, y in zip(prev, ys):
            step, state = model.decode_step(y_prev, state, enc, b)
            nll.append(-np.log(step.p_final[y]))
        assert fused == pytest.approx(np.mean(nll), abs=1e-10)


def test_teacher_loss_gradient_end_to_end():
    pairs = toy_pairs(2, seed=5, src_len=(4, 6), sum_len=(2, 3))
    pairs[1].source[0] = "oov_word"
    pairs[1].summary[0] = "oov_word"
    model = _model(pairs[:1] + [ArticlePair("z", ["w1"], ["w1"])])
    _randomise(model, 2)
    batch = make_batch(pairs, model.vocab, 40, 8)
    errs = check_params(lambda: model.loss(batch), model.params, max_coords=6)
    assert max(errs.values()) < 1e-4, errs


def test_record_attention_shapes():
    src = [f"w{k}" for k in range(12)]
    pair = ArticlePair("p", src, src[:5])
    model = _model([pair])
    rec = record_attention(model, [pair])[0]
    assert isinstance(rec, AttentionRecord)
    assert rec.logits.shape == (5, 12)
    np.testing.assert_allclose(softmax_t(rec.logits).sum(axis=1), 1.0, atol=1e-12)
    g = record_attention(model, [pair], "greedy")[0]
    assert g.logits.shape[1] == 12 and g.logits.shape[0] >= 1
    assert rec.to_json()["mode"] == "teacher-forced"
    with pytest.raises(ValueError):
        record_attention(model, [pair], "beam")


def test_record_attention_batched_equals_single():
    pairs = toy_pairs(5, seed=9)
    model = _model(pairs)
    _randomise(model, 3)
    both = record_attention(model, pairs, batch_size=5)
    for p, r in zip(pairs, both):
        np.testing.assert_allclose(record_attention(model, [p])[0].logits, r.logits, atol=1e-12)


def test_training_curve_drops_and_is_deterministic(tmp_path):
    pairs = toy_pairs(8)
    v, c = vocab_for(pairs), chars_for(pairs)
    cfg = TeacherConfig(**TINY_TEACHER, lr=1e-2, batch_size=4, steps=50, seed=3, log_every=0)
    m1, curve = train_teacher(pairs, cfg, v, c)
    assert np.mean(curve[25:50]) < np.mean(curve[:25])
    m2, _ = train_teacher(pairs, cfg, v, c)
    h1 = m1.save(tmp_path / "a.gdck", curve)
    h2 = m2.save(tmp_path / "b.gdck", curve)
    assert h1 == h2
    back = PointerGenerator.load(tmp_path / "a.gdck")
    assert back.params.equal(m1.params) and back.cfg == cfg


def test_greedy_can_copy_out_of_vocabulary():
    pair = ArticlePair("p", ["w1", "rareword", "w2"], ["rareword"])
    model = _model([ArticlePair("q", ["w1", "w2"], ["w1"])])
    batch, enc, state = model.start(pair)
    step, _ = model.decode_step(2, state, enc, batch, force_p_gen=0.0)
    assert step.oov == ["rareword"]
    assert step.p_final[len(model.vocab)] == pytest.approx(step.attention[1])


def test_load_rejects_wrong_kind(tmp_path):
    from gistdistill.autodiff import ParamSet, save_checkpoint
    save_checkpoint(tmp_path / "x.gdck", ParamSet(), {"kind": "student"})
    with pytest.raises(ValueError):
        PointerGenerator.load(tmp_path / "x.gdck")
