import numpy as np
import pytest

from conftest import TINY_STUDENT
from gistdistill.autodiff import ParamSet, Tensor
from gistdistill.autodiff.gradcheck import check_params
from gistdistill.autodiff import tensor as F
from gistdistill.gist import (GistDetector, StudentConfig, gist_batch, gist_forward,
                              init_self_attention, self_attention_block)
from gistdistill.textio import CharVocab, build_vocab

DOCS = [["the", "cat", "sat", "on", "a", "mat"], ["a", "dog"], ["one"], ["cat", "dog", "cat", "x", "y"]]


@pytest.fixture
def model():
    vocab = build_vocab(DOCS, 100)
    chars = CharVocab.from_tokens(t for d in DOCS for t in d)
    m = GistDetector(StudentConfig(**TINY_STUDENT), vocab, chars)
    rng = np.random.default_rng(0)
    for n in m.params.names():
        m.params[n].data = rng.uniform(-0.8, 0.8, m.params[n].shape)
    return m


def _attn_params(d=6, heads=2, head_dim=3, seed=0):
    ps = ParamSet()
    init_self_attention(ps, "sa", d, heads, head_dim, np.random.default_rng(seed))
    return ps


def test_zero_output_projection_is_identity():
    ps = _attn_params()
    ps["sa.o.W"].data[:] = 0.0
    U = np.random.default_rng(1).normal(size=(2, 5, 6))
    out = self_attention_block(ps, "sa", Tensor(U), 2).data
    assert np.array_equal(out, U)


def test_single_position_oracle():
    ps = _attn_params(d=4, heads=2, head_dim=2, seed=3)
    ps["sa.o.b"].data = np.random.default_rng(2).normal(size=4)
    u = np.random.default_rng(4).normal(size=4)
    out = self_attention_block(ps, "sa", Tensor(u.reshape(1, 1, 4)), 2).data[0, 0]
    # with one position every head puts weight 1 on it, so the head output is just V_h u
    v = u @ ps["sa.v.W"].data
    expected = v @ ps["sa.o.W"].data + ps["sa.o.b"].data + u
    np.testing.assert_allclose(out, expected, atol=1e-14)


def test_block_shape_at_published_width():
    ps = _attn_params(d=256, heads=4, head_dim=64)
    out = self_attention_block(ps, "sa", Tensor(np.zeros((1, 7, 256))), 4)
    assert out.shape == (1, 7, 256)


def test_block_rejects_indivisible_heads():
    ps = _attn_params(d=6, heads=2, head_dim=3)
    with pytest.raises(ValueError):
        self_attention_block(ps, "sa", Tensor(np.zeros((1, 2, 6))), 4)


def test_masked_keys_do_not_leak():
    ps = _attn_params()
    rng = np.random.default_rng(5)
    U = rng.normal(size=(1, 4, 6))
    mask = np.array([[True, True, False, False]])
    a = self_attention_block(ps, "sa", Tensor(U), 2, mask).data
    U2 = U.copy()
    U2[0, 2:] = rng.normal(size=(2, 6))
    b = self_attention_block(ps, "sa", Tensor(U2), 2, mask).data
    np.testing.assert_allclose(a[0, :2], b[0, :2], atol=1e-14)


def test_config_rejects_width_mismatch():
    with pytest.raises(ValueError):
        StudentConfig(hidden=10, heads=3, head_dim=4)


def test_published_config_is_consistent():
    c = StudentConfig()
    assert c.heads * c.head_dim == 2 * c.hidden == 256
    assert c.repr.out_dim == 150 and (c.train_T, c.infer_T) == (4.0, 1.0)


def test_weights_are_distributions(model):
    for d in DOCS:
        g = gist_forward(model, d)
        assert abs(g.weights.sum() - 1) < 1e-6 and np.all(g.weights > 0)
        assert len(g.weights) == len(d)


def test_eval_is_deterministic(model):
    a, b = gist_forward(model, DOCS[0]), gist_forward(model, DOCS[0])
    assert np.array_equal(a.weights, b.weights)


def test_batched_equals_unbatched(model):
    batched = gist_batch(model, [(str(k), d) for k, d in enumerate(DOCS)], batch_size=4)
    for g, d in zip(batched, DOCS):
        np.testing.assert_allclose(g.weights, gist_forward(model, d).weights, atol=1e-9)
    one = gist_batch(model, [("0", DOCS[0])])[0]
    assert np.array_equal(one.weights, gist_forward(model, DOCS[0]).weights)


def test_padding_gets_zero_weight(model):
    b = model.batch(["a", "b"], DOCS[:2])
    w = model.weights(b).data
    assert np.all(w[1, 2:] == 0.0)


def test_temperature_flattens(model):
    from gistdistill.distill import entropy
    assert entropy(gist_forward(model, DOCS[0], T=4.0).weights) > entropy(gist_forward(model, DOCS[0], T=1.0).weights)


def test_empty_inputs_rejected(model):
    with pytest.raises(ValueError):
        gist_forward(model, [])
    with pytest.raises(ValueError):
        gist_batch(model, [])


def test_student_loss_gradient(model):
    b = model.batch(["a", "b"], DOCS[:2])
    q = np.zeros(b.mask.shape)
    q[0, :6] = np.random.default_rng(1).dirichlet(np.ones(6))
    q[1, :2] = [0.3, 0.7]

    def loss():
        p = model.weights(b, 4.0)
        return -F.tsum(F.log(p + (~b.mask).astype(float)) * q)

    errs = check_params(loss, model.params, max_coords=5)
    assert max(errs.values()) < 1e-4, errs


def test_save_load_round_trip(model, tmp_path):
    model.save(tmp_path / "s.gdck", [1.0, 0.5])
    back = GistDetector.load(tmp_path / "s.gdck")
    assert back.params.equal(model.params) and back.cfg == model.cfg
    assert np.array_equal(gist_forward(back, DOCS[3]).weights, gist_forward(model, DOCS[3]).weights)


def test_copy_into_other_prefix(model):
    ps = ParamSet()
    clone = model.copy_into(ps, "inner")
    assert all(n.startswith("inner.") for n in ps.names())
    assert clone.num_parameters() == model.num_parameters()
    assert np.array_equal(gist_forward(clone, DOCS[0]).weights, gist_forward(model, DOCS[0]).weights)
