"""Teacher, distillation, gist detector and classifier on the synthetic corpus.

Run with ``python3 demos/pipeline_walkthrough.py`` (about five minutes on one CPU).
Each stage prints what it produced, so the script doubles as a tour of the
library API.
"""
import time

import numpy as np

from gistdistill import synthetic
from gistdistill.distill import build_transfer_set, mean_kl, train_student
from gistdistill.gist import DESK_STUDENT, StudentConfig, gist_batch
from gistdistill.heatmap import render_terminal
from gistdistill.integration import DESK_CLASSIFIER, ClassifierConfig, train_classifier
from gistdistill.teacher import DESK_TEACHER, TeacherConfig, train_teacher
from gistdistill.textio import ArticlePair, CharVocab, LabeledDoc, build_vocab

SEED = 1


def stage(title):
    print(f"\n== {title} " + "=" * max(0, 60 - len(title)))
    return time.perf_counter()


t = stage("synthetic corpus")
train = synthetic.generate(500, SEED * 1000, prefix="train")
test = synthetic.generate(100, SEED * 1000 + 2, prefix="test")
doc = test[0]
print(f"{len(train)} train / {len(test)} test documents; first test doc has {len(doc.tokens)} tokens,")
print(f"label {doc.label!r}, signal tokens {[doc.tokens[i] for i in doc.signal_positions]}")
print("its reference summary:", " ".join(doc.summary))

pairs = [ArticlePair(d.id, d.tokens, d.summary) for d in train]
vocab = build_vocab([p.source + p.summary for p in pairs], 50000)
chars = CharVocab.from_tokens(tok for p in pairs for tok in p.source + p.summary)

t = stage("teacher: pointer-generator summariser")
teacher, curve = train_teacher(pairs, TeacherConfig(**DESK_TEACHER, seed=SEED), vocab, chars)
print(f"loss {curve[0]:.3f} -> {curve[-1]:.3f} over {len(curve)} steps ({time.perf_counter() - t:.0f}s)")
print("greedy summary of the first test doc:", " ".join(teacher.greedy(ArticlePair(doc.id, doc.tokens, doc.summary))[0]))

t = stage("transfer set at T=4")
ts = build_transfer_set(pairs, [teacher], 4.0)
q = ts.records[0].q
print(f"{len(ts.records)} soft-target records; first has max weight {q.max():.3f} vs uniform {1 / len(q):.4f}")

t = stage("student: gist detector")
student, curve = train_student(ts, StudentConfig(**DESK_STUDENT, seed=SEED), vocab, chars)
print(f"loss {curve[0]:.3f} -> {curve[-1]:.3f}; mean KL to teacher {mean_kl(student, ts):.4f} "
      f"({time.perf_counter() - t:.0f}s)")
g = gist_batch(student, [(doc.id, doc.tokens)])[0]
top = np.argsort(g.weights)[::-1][:5]
print("top-5 positions:", sorted(top.tolist()), " signal positions:", doc.signal_positions)
print(render_terminal(doc.tokens[30:80], g.weights[30:80] / g.weights[30:80].sum()))

t = stage("downstream classifier")
ltrain = [LabeledDoc(d.id, d.tokens, d.label) for d in train]
ltest = [LabeledDoc(d.id, d.tokens, d.label) for d in test]
cvocab = build_vocab([d.tokens for d in ltrain], 50000)
for mode in ("baseline", "+NP", "+GD"):
    accs = []
    for seed in range(3):
        cfg = ClassifierConfig(**DESK_CLASSIFIER, mode=mode, seed=seed)
        _, rep = train_classifier(ltrain, cfg, cvocab, None if mode == "baseline" else student, test=ltest)
        accs.append(rep["test_accuracy"])
    print(f"{mode:>8}: mean test accuracy {100 * np.mean(accs):.1f}% over 3 seeds")
