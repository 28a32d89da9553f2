"""How the distillation temperature reshapes a teacher's soft targets.

Pure numpy, runs instantly. Higher T spreads mass over more tokens, so the
entropy of Q grows. At low T the geometric mean is much sharper than the
arithmetic one; at high T the two converge.
"""
import numpy as np

from gistdistill.distill import distill_loss, entropy, soft_target

rng = np.random.default_rng(0)
logits = rng.normal(0, 3, (4, 10))   # 4 decoder steps over a 10-token source
logits[:, 7] += 4.0                  # one token the teacher keeps attending to

print(" T     H(Q) arith   H(Q) geo   argmax")
for T in (0.5, 1.0, 2.0, 4.0, 8.0):
    qa, qg = soft_target(logits, T), soft_target(logits, T, geometric=True)
    print(f"{T:4.1f}   {entropy(qa):10.4f}   {entropy(qg):8.4f}   {int(qa.argmax())}")

q = soft_target(logits, 4.0)
uniform = np.full(10, 0.1)
print(f"\ncross-entropy against Q at T=4: uniform student {distill_loss(q, uniform):.4f}, "
      f"perfect student {distill_loss(q, q):.4f} (= H(Q))")
