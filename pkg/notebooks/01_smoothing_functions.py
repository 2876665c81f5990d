"""
Soft targets from annotator votes and model confidence
======================================================

Tabulates every smoothing rule for a seven-annotator panel and for a sweep
of baseline confidences.
"""

import numpy as np

from smoothcal import smoothing as sm

N = 7
n_k = np.arange(N + 1)

# agreement-aware rules map a vote count n_k (out of N) to a target
print("n_k/N     linear(0.1)  piecewise(0.25)  nonlinear(7.5)")
for k, lin, pw, nl in zip(
    n_k,
    sm.smooth_agreement_linear(n_k, N, 0.1),
    sm.smooth_agreement_piecewise(n_k, N, 0.25),
    sm.smooth_agreement_nonlinear(n_k, N, 7.5),
):
    print(f"{k}/{N}     {lin:11.4f}  {pw:15.4f}  {nl:14.4f}")

# the piecewise rule puts a bare majority (4 of 7) at 0.5 and 3 of 7 at omega,
# so the two sides of the midpoint are not mirror images
print("majority threshold:", sm.majority_threshold(N))

# confidence-aware rules take the positive-class probability of a baseline model
c = np.linspace(0, 1, 11)
print("\nc      vanilla(0.2)  linear(0.2)  piecewise(0.25)  nonlinear(7.5)")
for row in zip(
    c,
    sm.smooth_confidence_vanilla(c, 0.2),
    sm.smooth_confidence_linear(c, 0.2),
    sm.smooth_confidence_piecewise(c, 0.25),
    sm.smooth_confidence_nonlinear(c, 7.5),
):
    print("  ".join(f"{v:11.4f}" for v in row))

# confidence-vanilla rounds c to the nearest class; the tie c = 0.5 goes to 1
print("\nround(0.5) ->", sm.round_confidence(0.5))

# the piecewise confidence rule jumps by 1 - 2*omega at c = 0.5
for omega in (0.1, 0.25, 0.5):
    lo = sm.smooth_confidence_piecewise(np.nextafter(0.5, 0), omega)
    hi = sm.smooth_confidence_piecewise(np.nextafter(0.5, 1), omega)
    print(f"omega={omega}: jump {hi - lo:.4f}")

# a SmoothingSpec bundles method and hyperparameter; smooth() applies it to arrays
spec = sm.SmoothingSpec(sm.Method.AGREEMENT_NONLINEAR, 7.5)
print("\n", spec.label(), sm.smooth(spec, n_pos=np.array([0, 4, 7]), n_annotators=np.array([7, 7, 7])))
