from gistdistill import synthetic
from gistdistill.textio import read_labeled, read_pairs


def test_documents_follow_the_recipe():
    lex = synthetic.make_lexicons()
    assert not set(lex.signal[0]) & set(lex.signal[1])
    assert not set(lex.noise) & (set(lex.signal[0]) | set(lex.signal[1]))
    for d in synthetic.generate(50, 3, lexicons=lex):
        assert 80 <= len(d.tokens) <= 140
        assert len(d.signal_positions) == 3 == len(set(d.signal_positions))
        side = lex.signal[synthetic.LABELS.index(d.label)]
        assert all(t in side for t in d.summary)
        others = [t for i, t in enumerate(d.tokens) if i not in d.signal_positions]
        assert all(t in lex.noise for t in others)


def test_seeded_and_distinct():
    a, b, c = synthetic.generate(5, 1), synthetic.generate(5, 1), synthetic.generate(5, 2)
    assert [d.tokens for d in a] == [d.tokens for d in b]
    assert [d.tokens for d in a] != [d.tokens for d in c]


def test_written_corpus_reads_back(tmp_path):
    paths = synthetic.write_corpus(tmp_path, 4, 6, 0, 3)
    assert set(paths) == {"train.pairs", "train.labeled", "test.pairs", "test.labeled"}
    pairs = read_pairs(paths["train.pairs"])
    docs = read_labeled(paths["train.labeled"])
    assert len(pairs) == len(docs) == 6
    assert all(p.source == d.tokens for p, d in zip(pairs, docs))
