"""
The two-stage confidence-aware pipeline
=======================================

Stage one trains on hard labels and records each training example's
predicted probability.  Stage two turns those probabilities into soft
targets and retrains from a fresh initialisation.
"""

import numpy as np

from smoothcal import data, harness, model
from smoothcal.smoothing import Method, SmoothingSpec, smooth

ds = data.generate(data.GeneratorConfig(n_train=800, n_test=400, seed=1))
cfg = harness.ExperimentConfig(
    name="confidence-demo",
    train=model.TrainConfig(epochs=60),
    seeds=(0, 1, 2),
    smoothing=SmoothingSpec(Method.CONFIDENCE_NONLINEAR, 5.0),
)

# stage one: one row of training-set confidences per seed
conf = harness.stage_one_confidences(cfg, ds)
print("stage-one confidences:", conf.shape, "mean", conf.mean().round(3))

# confidences near 0 or 1 mark examples the baseline found easy
targets = smooth(cfg.smoothing, confidence=conf[0])
print("targets for the first five examples:", np.round(targets[:5], 3))

# stage two only ever sees the features and these targets
res = harness.run_confidence(cfg, ds, stage_one=conf)
base = harness.run_baseline(harness.ExperimentConfig(train=cfg.train, seeds=cfg.seeds), ds)
print(f"\n{'baseline':28s} AUC {base.summary.auc_row}  ECE {base.summary.ece_row}")
print(f"{cfg.smoothing.label():28s} AUC {res.summary.auc_row}  ECE {res.summary.ece_row}")

# an earlier stage-one checkpoint gives less extreme confidences
early = harness.stage_one_confidences(
    harness.ExperimentConfig(train=cfg.train, seeds=cfg.seeds, confidence_checkpoint=10), ds
)
print(f"\nmean |c - 0.5|: epoch 10 {np.abs(early - 0.5).mean():.3f}, final {np.abs(conf - 0.5).mean():.3f}")
