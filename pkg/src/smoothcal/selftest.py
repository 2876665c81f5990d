"""Quick numerical self-checks run by ``smoothcal selftest``.

Each check compares a library routine against a slower, independently
written computation: exact rational arithmetic for the smoothing formulas,
pair counting for AUC, per-sample binning for ECE and central differences
for the gradient.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, List, Tuple

import numpy as np

from . import metrics, model, smoothing


def _frac_targets(method, n_k, N, h):
    a = Fraction(h)
    f = Fraction(n_k, N)
    if method == "agreement-linear":
        return (1 - a) * f + a / 2
    n_m = -(-N // 2)
    if n_k > n_m:
        return (1 - a) + a * Fraction(n_k - n_m, n_m - 1)
    if n_k == n_m:
        return Fraction(1, 2)
    return a * Fraction(n_k, n_m - 1)


def check_smoothing() -> Tuple[bool, str]:
    worst = 0.0
    for N in (3, 5, 7, 9):
        for n_k in range(N + 1):
            for h in (0.1, 0.3, 0.5):
                y = smoothing.smooth_agreement_linear(n_k, N, h)
                worst = max(worst, abs(y - float(_frac_targets("agreement-linear", n_k, N, h))))
                y = smoothing.smooth_agreement_piecewise(n_k, N, h)
                worst = max(worst, abs(y - float(_frac_targets("agreement-piecewise", n_k, N, h))))
            for phi in (1.0, 7.5):
                y = smoothing.smooth_agreement_nonlinear(n_k, N, phi)
                worst = max(worst, abs(y - 1.0 / (1.0 + math.exp(-phi * (n_k / N - 0.5)))))
    return worst <= 1e-12, f"max abs error {worst:.2e}"


def check_auc(rng) -> Tuple[bool, str]:
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 40))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = np.round(rng.random(n), 1)
        pos, neg = s[y == 1], s[y == 0]
        wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
        worst = max(worst, abs(metrics.auc(s, y) - wins / (len(pos) * len(neg))))
    return worst <= 1e-12, f"max abs error {worst:.2e}"


def check_ece(rng) -> Tuple[bool, str]:
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 40))
        p = rng.random(n)
        y = rng.integers(0, 2, n)
        total = 0.0
        for b in range(15):
            members = [
                i for i in range(n)
                if b == min(int(max(p[i], 1 - p[i]) * 15), 14)
            ]
            if members:
                conf = sum(max(p[i], 1 - p[i]) for i in members) / len(members)
                acc = sum(int(p[i] >= 0.5) == y[i] for i in members) / len(members)
                total += len(members) / n * abs(acc - conf)
        worst = max(worst, abs(metrics.ece(p, y)[0] - total))
    return worst <= 1e-12, f"max abs error {worst:.2e}"


def check_gradient(rng) -> Tuple[bool, str]:
    worst = 0.0
    for hidden in (0, 8):
        params = model.init(int(rng.integers(1 << 30)), 5, hidden)
        X = rng.normal(size=(12, 5))
        y = rng.choice([0.0, 0.12, 0.5, 0.85, 1.0], size=12)
        g = model.gradient(params, X, y, weight_decay=1e-3)
        flat = params.flat()
        gflat = np.concatenate([np.ravel(g[k]) for k in params.arrays])
        for j in range(flat.size):
            e = np.zeros_like(flat)
            e[j] = 1e-5
            fd = (model.loss(params.with_flat(flat + e), X, y, 1e-3)
                  - model.loss(params.with_flat(flat - e), X, y, 1e-3)) / 2e-5
            worst = max(worst, abs(fd - gflat[j]) / max(abs(fd), abs(gflat[j]), 1e-8))
    return worst <= 1e-4, f"max relative error {worst:.2e}"


def run() -> List[Tuple[str, bool, str]]:
    rng = np.random.default_rng(20210101)
    checks: List[Tuple[str, Callable]] = [
        ("smoothing formulas", check_smoothing),
        ("auc pair counting", lambda: check_auc(rng)),
        ("ece re-binning", lambda: check_ece(rng)),
        ("gradient finite differences", lambda: check_gradient(rng)),
    ]
    return [(name, *fn()) for name, fn in checks]
