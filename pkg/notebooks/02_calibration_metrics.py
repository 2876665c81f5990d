"""
AUC, expected calibration error and the reliability table
=========================================================

Scores an over-confident predictor and a calibrated one on the same
labels, showing that ranking quality and calibration are separate things.
"""

import numpy as np

from smoothcal import metrics

rng = np.random.default_rng(0)
n = 2000

# the true positive-class probability of each example, and labels drawn from it
true_p = rng.beta(2, 2, size=n)
y = (rng.random(n) < true_p).astype(int)

# sharpening the logit keeps the ranking but pushes probabilities to 0 and 1
logit = np.log(true_p) - np.log1p(-true_p)
sharp = 1 / (1 + np.exp(-3 * logit))

for name, p in (("calibrated", true_p), ("over-confident", sharp)):
    r = metrics.evaluate(p, y, n_bins=15)
    print(f"{name:15s} AUC {100 * r.auc:5.1f}  ECE {100 * r.ece:5.1f}")

# both predictors rank identically, so their AUCs match; only ECE tells them apart
print("\nreliability table, over-confident predictor")
print(" bin            count  confidence  accuracy")
for b in metrics.reliability_table(sharp, y, 15):
    if b.count:
        print(f" [{b.lower:.3f}, {b.upper:.3f})  {b.count:5d}  {b.mean_confidence:10.3f}  {b.accuracy:8.3f}")

# several seeds are summarised as mean and sample standard deviation, x100
reports = [metrics.evaluate(np.clip(sharp + rng.normal(0, 0.02, n), 0, 1), y) for _ in range(5)]
s = metrics.aggregate(reports)
print("\nAUC", s.auc_row, " ECE", s.ece_row)
