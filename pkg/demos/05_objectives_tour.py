"""
A tour of the training objectives
=================================

The contrastive losses, the product quantizer, and the exact CTC scorer are
pure functions over supplied tensors, each shipping with an analytic gradient
that is checked against central finite differences.
"""
import math

import numpy as np

from afprobe import (
    QuantizerConfig,
    cpc_loss,
    ctc_log_prob,
    hubert_loss,
    joint_objective,
    product_quantize,
    w2v2_loss,
)
from afprobe.verify import (
    check_cpc_gradient,
    ctc_brute_force,
    random_cpc_batch,
    random_masked_batch,
    uniform_score_losses,
)

###############################################################################
# Contrastive losses collapse to ln N when every candidate ties
# -------------------------------------------------------------

losses = uniform_score_losses(n_candidates=5)
print(f"ln 5 = {math.log(5):.6f}")
for name, value in losses.items():
    print(f"  {name:<7} uniform-candidate loss = {value:.6f}")

###############################################################################
# Analytic gradients match finite differences
# -------------------------------------------

err = check_cpc_gradient(seed=0)
print(f"\ncpc gradient vs central differences: max rel err {err:.2e}")

res = cpc_loss(random_cpc_batch(seed=1))
print(f"random batch: loss {res.loss:.4f}, grad norms "
      f"z {np.linalg.norm(res.grad_z):.3f} c {np.linalg.norm(res.grad_c):.3f}")

###############################################################################
# The masked losses and their mixing weights
# ------------------------------------------

batch = random_masked_batch(seed=2, alpha=0.1)
w = w2v2_loss(batch)
print(f"\nmasked contrastive {w.l_m:.4f} + 0.1 * diversity {w.l_d:.4f} = {w.loss:.4f}")

hb = random_masked_batch(seed=3, alpha=0.5, with_usage=False)
h = hubert_loss(hb)
print(f"masked/unmasked mix: 0.5 * {h.l_m:.4f} + 0.5 * {h.l_u:.4f} = {h.loss:.4f}")

###############################################################################
# Product quantization is a hard nearest-neighbor concatenation
# -------------------------------------------------------------

q = QuantizerConfig(np.array([[[0.0, 0.0], [1.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]]))
vec = np.array([0.9, 0.8, 0.1, 0.9])
quantized, indices = product_quantize(vec, q)
print(f"\n{vec} -> {quantized} via entries {[int(i) for i in indices]}")

###############################################################################
# Exact CTC forward score, verified by enumerating every path
# -----------------------------------------------------------

rng = np.random.default_rng(4)
logits = rng.standard_normal((4, 3))
log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
target = [0, 1]
forward = ctc_log_prob(log_probs, target)
enumerated = ctc_brute_force(log_probs, target)
print(f"\nforward {forward.log_prob:.10f} vs enumeration {enumerated:.10f}")

print(f"joint objective at lambda=0.3: {joint_objective(forward.log_prob, -1.5, 0.3):.4f}")
