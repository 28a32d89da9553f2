import numpy as np
import pytest

from gistdistill.heatmap import N_BUCKETS, buckets, heatmap_emit, html_document, render_terminal


def test_uniform_weights_share_a_bucket():
    assert len(set(buckets([0.25] * 4))) == 1


def test_unique_max_is_darkest():
    b = buckets([0.1, 0.2, 0.6, 0.05, 0.05])
    assert b[2] == N_BUCKETS - 1 and all(x < b[2] for k, x in enumerate(b) if k != 2)


def test_buckets_monotone_in_weight():
    rng = np.random.default_rng(0)
    w = rng.dirichlet(np.ones(30))
    b = buckets(w)
    order = np.argsort(w)
    assert np.all(np.diff(b[order]) >= 0)


def test_html_escapes_markup():
    out = heatmap_emit(["<b>", "a&b", "x"], [0.5, 0.3, 0.2], "html")
    assert "&lt;b&gt;" in out and "a&amp;b" in out
    assert ">&lt;b&gt;<" in out and "><b><" not in out


def test_terminal_has_one_span_per_token():
    out = render_terminal(["a", "b", "c"], [0.2, 0.3, 0.5])
    assert out.count("\x1b[0m") == 3


def test_document_wrapper():
    doc = html_document(heatmap_emit(["a"], [1.0], "html", title="t<1>"))
    assert doc.startswith("<!DOCTYPE html>") and "t&lt;1&gt;" in doc


@pytest.mark.parametrize("tokens,weights", [(["a"], [0.5, 0.5]), ([], []), (["a"], [-1.0])])
def test_bad_inputs(tokens, weights):
    with pytest.raises(ValueError):
        heatmap_emit(tokens, weights)


def test_unknown_format():
    with pytest.raises(ValueError):
        heatmap_emit(["a"], [1.0], "pdf")
