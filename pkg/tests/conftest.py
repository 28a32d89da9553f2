import numpy as np
import pytest

from gistdistill.textio import ArticlePair, CharVocab, build_vocab


def toy_pairs(n=8, seed=0, src_len=(6, 12), sum_len=(2, 4), n_words=30):
    """Small random corpus whose summaries copy source tokens in order."""
    rng = np.random.default_rng(seed)
    words = [f"w{k}" for k in range(n_words)]
    out = []
    for j in range(n):
        m = int(rng.integers(src_len[0], src_len[1] + 1))
        src = [words[i] for i in rng.integers(0, n_words, m)]
        k = int(rng.integers(sum_len[0], sum_len[1] + 1))
        pos = np.sort(rng.choice(m, size=min(k, m), replace=False))
        out.append(ArticlePair(f"ex{j:02d}", src, [src[p] for p in pos]))
    return out


def vocab_for(pairs, max_size=50000):
    return build_vocab([p.source + p.summary for p in pairs], max_size)


def chars_for(pairs):
    return CharVocab.from_tokens(t for p in pairs for t in p.source + p.summary)


@pytest.fixture
def pairs():
    return toy_pairs()


@pytest.fixture
def vocab(pairs):
    return vocab_for(pairs)


@pytest.fixture
def chars(pairs):
    return chars_for(pairs)


TINY_TEACHER = dict(word_dim=6, char_dim=3, n_filters=4, width=3, hidden=5, dec_hidden=5,
                    attn_dim=4, max_src=40, max_tgt=8, dropout=0.0)
TINY_STUDENT = dict(word_dim=5, char_dim=3, n_filters=3, width=3, hidden=4, heads=2, head_dim=4,
                    mlp_hidden=5, dropout=0.0, max_len=40)


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
