"""Token shading by importance weight, for terminals and HTML."""
from __future__ import annotations

import html
from typing import Sequence

import numpy as np

# ANSI 256-colour backgrounds, light to dark blue
_ANSI_BG = (255, 153, 111, 69, 21)
N_BUCKETS = len(_ANSI_BG)


def _check(tokens: Sequence[str], weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if len(tokens) != len(w):
        raise ValueError(f"{len(tokens)} tokens but {len(w)} weights")
    if len(w) == 0:
        raise ValueError("nothing to render")
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    return w


def buckets(weights) -> np.ndarray:
    """Shade index 0..4 per token.

    The top shade is reserved for the maximum weight; everything else is split
    into four quantile bands. Equal weights always share a shade.
    """
    w = np.asarray(weights, dtype=np.float64)
    out = np.zeros(len(w), dtype=int)
    top = w == w.max()
    if top.all():
        return out
    out[top] = N_BUCKETS - 1
    rest = w[~top]
    edges = np.quantile(rest, [0.25, 0.5, 0.75])
    out[~top] = np.searchsorted(edges, rest, side="left")
    return out


def intensities(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    return w / w.max() if w.max() > 0 else np.zeros_like(w)


def render_terminal(tokens: Sequence[str], weights) -> str:
    w = _check(tokens, weights)
    parts = []
    for tok, b in zip(tokens, buckets(w)):
        fg = 231 if b >= 3 else 16
        parts.append(f"\x1b[48;5;{_ANSI_BG[b]}m\x1b[38;5;{fg}m{tok}\x1b[0m")
    return " ".join(parts)


def render_html(tokens: Sequence[str], weights, title: str = "") -> str:
    w = _check(tokens, weights)
    spans = []
    for tok, a, wi in zip(tokens, intensities(w), w):
        color = "#fff" if a > 0.6 else "#000"
        spans.append(f'<span style="background-color: rgba(0, 0, 255, {a:.4f}); color: {color}" '
                     f'title="{wi:.6f}">{html.escape(tok)}</span>')
    head = f"<h3>{html.escape(title)}</h3>\n" if title else ""
    return f'{head}<p style="line-height: 1.8">{" ".join(spans)}</p>\n'


def heatmap_emit(tokens: Sequence[str], weights, format: str = "terminal", title: str = "") -> str:
    if format == "terminal":
        return render_terminal(tokens, weights)
    if format == "html":
        return render_html(tokens, weights, title)
    raise ValueError(f"unknown heatmap format {format!r}")


def html_document(body: str) -> str:
    return ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>gist heatmap</title></head>"
            f"<body>\n{body}</body></html>\n")
