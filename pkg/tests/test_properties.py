"""Property-based checks over randomly drawn inputs."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gistdistill.autodiff import softmax_t
from gistdistill.distill import distill_loss, entropy, soft_target
from gistdistill.integration import blend_context, blend_scores
from gistdistill.teacher import copy_distribution, mix_distributions
from gistdistill.textio import build_vocab, tokenize

finite = st.floats(-50, 50, allow_nan=False)


def simplex(n_min=1, n_max=12):
    return hnp.arrays(np.float64, st.integers(n_min, n_max), elements=st.floats(0.01, 10)).map(
        lambda w: w / w.sum())


@given(hnp.arrays(np.float64, st.integers(1, 20), elements=finite), st.floats(0.05, 20))
def test_softmax_is_distribution(z, T):
    p = softmax_t(z, T)
    assert abs(p.sum() - 1) < 1e-12 and np.all(p >= 0)


@given(st.floats(0, 1), simplex(), simplex())
def test_mixture_is_distribution(g, pv, pc):
    p = mix_distributions(g, pv, pc)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9


@given(simplex(1, 15), st.data())
def test_copy_distribution_sums_to_one(a, data):
    ids = data.draw(hnp.arrays(np.int64, len(a), elements=st.integers(0, 6)))
    pc = copy_distribution(a, ids, 7)
    assert abs(pc.sum() - 1) < 1e-12
    assert np.all(pc[np.setdiff1d(np.arange(7), ids)] == 0)


@given(st.integers(1, 6), st.integers(1, 10), st.floats(0.2, 10), st.booleans(), st.integers(0, 2**31))
def test_soft_target_is_distribution(ty, m, T, geo, seed):
    d = np.random.default_rng(seed).normal(0, 5, (ty, m))
    q = soft_target(d, T, geo)
    assert q.shape == (m,) and abs(q.sum() - 1) < 1e-9 and np.all(q > 0)


@given(st.integers(1, 10), st.integers(0, 2**31))
def test_gibbs(m, seed):
    rng = np.random.default_rng(seed)
    q, p = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))
    assert distill_loss(q, p) >= entropy(q) - 1e-9


@given(st.floats(0, 1), st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31))
def test_blend_affine_in_lambda(lam, m, dim, seed):
    rng = np.random.default_rng(seed)
    v, q, d = rng.normal(size=dim), rng.normal(size=(m, dim)), rng.dirichlet(np.ones(m))
    a, b = blend_context(v, q, d, 0.0), blend_context(v, q, d, 1.0)
    np.testing.assert_allclose(blend_context(v, q, d, lam), (1 - lam) * a + lam * b, atol=1e-9)
    r = rng.dirichlet(np.ones(m))
    s = blend_scores(r, d, lam)
    assert abs(s.sum() - 1) < 1e-9


@settings(max_examples=50)
@given(st.text(min_size=1, max_size=60))
def test_vocab_round_trip_for_any_text(text):
    toks = tokenize(text)
    if not toks:
        return
    v = build_vocab([toks], 1000)
    assert v.decode(v.encode(toks)) == toks
