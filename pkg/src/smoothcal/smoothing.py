"""
Soft targets for binary classification from annotator votes or model confidence.

Every function returns the target probability of the *positive* class; the
negative-class target is ``1 - y``.  Functions accept Python scalars or numpy
arrays and return a ``float`` for scalar input and an ``ndarray`` otherwise.

Methods
-------
hard
    gold majority label, no smoothing
vanilla
    ``(1 - alpha) * y_k + alpha / K``
agreement-linear
    ``(1 - alpha) * n_k / N + alpha / K``
agreement-piecewise
    three-case rule around the majority threshold ``n_m = ceil(N / K)``
agreement-nonlinear
    ``sigmoid(phi * (n_k / N - 1/2))``
confidence-*
    the same shapes with the agreement fraction replaced by a baseline
    model's positive-class probability ``c``

Rounding in ``confidence-vanilla`` sends the tie ``c = 0.5`` to 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    ConfigurationError,
    InvalidInputError,
    MissingDataError,
    UnsupportedConfigurationError,
)

NUM_CLASSES = 2


class Method(str, enum.Enum):
    HARD = "hard"
    VANILLA = "vanilla"
    AGREEMENT_LINEAR = "agreement-linear"
    AGREEMENT_PIECEWISE = "agreement-piecewise"
    AGREEMENT_NONLINEAR = "agreement-nonlinear"
    CONFIDENCE_VANILLA = "confidence-vanilla"
    CONFIDENCE_LINEAR = "confidence-linear"
    CONFIDENCE_PIECEWISE = "confidence-piecewise"
    CONFIDENCE_NONLINEAR = "confidence-nonlinear"

    @property
    def hyperparameter(self) -> Optional[str]:
        """Name of the hyperparameter the method takes (None for hard labels)."""
        if self is Method.HARD:
            return None
        if self.value.endswith("piecewise"):
            return "omega"
        if self.value.endswith("nonlinear"):
            return "phi"
        return "alpha"

    @property
    def uses_votes(self) -> bool:
        return self.value.startswith("agreement-")

    @property
    def uses_confidence(self) -> bool:
        return self.value.startswith("confidence-")


def check_hyperparameter(name: str, value: float) -> float:
    """Validate ``value`` against the domain of hyperparameter ``name``.

    alpha in (0, 1], omega in (0, 0.5], phi in (0, inf).  Out-of-range values
    raise ConfigurationError; nothing is clamped.
    """
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(value):
        raise ConfigurationError(f"{name} must be finite, got {value}")
    if name == "alpha":
        if not 0.0 < value <= 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1], got {value}")
    elif name == "omega":
        if not 0.0 < value <= 0.5:
            raise ConfigurationError(f"omega must lie in (0, 0.5], got {value}")
    elif name == "phi":
        if not value > 0.0:
            raise ConfigurationError(f"phi must be > 0, got {value}")
    else:
        raise ConfigurationError(f"unknown hyperparameter {name!r}")
    return value


def _check_classes(K):
    if K != NUM_CLASSES:
        raise UnsupportedConfigurationError(f"only binary targets are supported (K=2), got K={K}")


def _wrap(result, scalar):
    return float(result) if scalar else result


def _as_confidence(c):
    scalar = np.ndim(c) == 0
    arr = np.asarray(c, dtype=np.float64)
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise InvalidInputError("confidence values must lie in [0, 1]")
    return arr, scalar


def _as_votes(n_k, N):
    scalar = np.ndim(n_k) == 0
    n_k = np.asarray(n_k)
    N = np.asarray(N)
    if n_k.dtype.kind not in "iu" or N.dtype.kind not in "iu":
        if not (np.all(np.mod(n_k, 1) == 0) and np.all(np.mod(N, 1) == 0)):
            raise InvalidInputError("vote counts must be integers")
    n_k = n_k.astype(np.int64)
    N = N.astype(np.int64)
    if np.any(N < 1):
        raise InvalidInputError("number of annotators N must be >= 1")
    if np.any((n_k < 0) | (n_k > N)):
        raise InvalidInputError("vote count n_k must satisfy 0 <= n_k <= N")
    return n_k, N, scalar


def sigmoid(x):
    """Logistic function in the two-branch form that cannot overflow."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def smooth_vanilla(y_k, alpha, K=NUM_CLASSES):
    """Classic label smoothing of a hard 0/1 label."""
    alpha = check_hyperparameter("alpha", alpha)
    _check_classes(K)
    scalar = np.ndim(y_k) == 0
    y_k = np.asarray(y_k, dtype=np.float64)
    if not np.all((y_k == 0.0) | (y_k == 1.0)):
        raise InvalidInputError("hard label y_k must be 0 or 1")
    return _wrap((1.0 - alpha) * y_k + alpha / K, scalar)


def smooth_agreement_linear(n_k, N, alpha, K=NUM_CLASSES):
    """Label smoothing with the one-hot label replaced by the vote fraction n_k / N."""
    alpha = check_hyperparameter("alpha", alpha)
    _check_classes(K)
    n_k, N, scalar = _as_votes(n_k, N)
    return _wrap((1.0 - alpha) * (n_k / N) + alpha / K, scalar)


def majority_threshold(N, K=NUM_CLASSES) -> int:
    """Votes needed for a majority, ``ceil(N / K)``."""
    return -(-int(N) // int(K))


def smooth_agreement_piecewise(n_k, N, omega, K=NUM_CLASSES):
    """Piecewise target with a jump at the majority threshold n_m = ceil(N/K).

    Above n_m the target climbs linearly from ``1 - omega`` to 1, exactly at
    n_m it is 0.5, below n_m it climbs linearly from 0 to ``omega``.

    Raises
    ------
    UnsupportedConfigurationError
        if ``n_m < 2`` (the slope divisor ``n_m - 1`` vanishes) or if N is
        even, where the upper branch overshoots 1.
    """
    omega = check_hyperparameter("omega", omega)
    _check_classes(K)
    n_k, N, scalar = _as_votes(n_k, N)
    Ns = np.unique(N)
    if Ns.size != 1:
        raise InvalidInputError("piecewise smoothing needs a single annotator count N")
    N0 = int(Ns[0])
    n_m = majority_threshold(N0, K)
    if n_m < 2:
        raise UnsupportedConfigurationError(
            f"piecewise smoothing needs n_m = ceil(N/K) >= 2, got n_m={n_m} for N={N0}"
        )
    if N0 % 2 == 0:
        raise UnsupportedConfigurationError(
            f"piecewise smoothing needs an odd number of annotators, got N={N0}"
        )
    span = n_m - 1
    above = (1.0 - omega) + omega * ((n_k - n_m) / span)
    below = omega * (n_k / span)
    y = np.where(n_k > n_m, above, np.where(n_k == n_m, 0.5, below))
    return _wrap(y, scalar)


def smooth_agreement_nonlinear(n_k, N, phi):
    """Sigmoid of the centred vote fraction, ``sigmoid(phi * (n_k/N - 1/2))``."""
    phi = check_hyperparameter("phi", phi)
    n_k, N, scalar = _as_votes(n_k, N)
    return _wrap(sigmoid(phi * (n_k / N - 0.5)), scalar)


def round_confidence(c):
    """Nearest-integer rounding of a confidence, ties (c = 0.5) going to 1."""
    return np.where(np.asarray(c) >= 0.5, 1.0, 0.0)


def smooth_confidence_vanilla(c, alpha, K=NUM_CLASSES):
    """Vanilla smoothing applied to the rounded baseline confidence."""
    alpha = check_hyperparameter("alpha", alpha)
    _check_classes(K)
    c, scalar = _as_confidence(c)
    return _wrap((1.0 - alpha) * round_confidence(c) + alpha / K, scalar)


def smooth_confidence_linear(c, alpha, K=NUM_CLASSES):
    alpha = check_hyperparameter("alpha", alpha)
    _check_classes(K)
    c, scalar = _as_confidence(c)
    return _wrap((1.0 - alpha) * c + alpha / K, scalar)


def smooth_confidence_piecewise(c, omega):
    """Piecewise target on confidence; the jump across c = 0.5 has size 1 - 2*omega."""
    omega = check_hyperparameter("omega", omega)
    c, scalar = _as_confidence(c)
    above = (1.0 - omega) + ((c - 0.5) / 0.5) * omega
    below = (c / 0.5) * omega
    y = np.where(c > 0.5, above, np.where(c == 0.5, 0.5, below))
    return _wrap(y, scalar)


def smooth_confidence_nonlinear(c, phi):
    phi = check_hyperparameter("phi", phi)
    c, scalar = _as_confidence(c)
    return _wrap(sigmoid(phi * (c - 0.5)), scalar)


@dataclass(frozen=True)
class SmoothingSpec:
    """A labeling method plus its hyperparameter.

    ``param`` is alpha, omega or phi depending on the method and must be
    None for ``Method.HARD``.
    """

    method: Method
    param: Optional[float] = None
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        try:
            method = Method(self.method)
        except ValueError:
            names = ", ".join(m.value for m in Method)
            raise ConfigurationError(f"unknown method {self.method!r}; expected one of {names}") from None
        object.__setattr__(self, "method", method)
        _check_classes(self.num_classes)
        name = method.hyperparameter
        if name is None:
            if self.param is not None:
                raise ConfigurationError("the hard-label method takes no hyperparameter")
        else:
            if self.param is None:
                raise ConfigurationError(f"method {method.value!r} requires a value for {name}")
            object.__setattr__(self, "param", check_hyperparameter(name, self.param))

    def to_dict(self):
        return {"method": self.method.value, "param": self.param}

    @classmethod
    def from_dict(cls, d):
        return cls(d["method"], d.get("param"))

    def label(self) -> str:
        if self.param is None:
            return self.method.value
        return f"{self.method.value}({self.method.hyperparameter}={self.param:g})"


def smooth(spec: SmoothingSpec, *, gold=None, n_pos=None, n_annotators=None, confidence=None):
    """Vectorised dispatcher used for whole splits.

    Only the inputs the method needs are read; a missing one raises
    MissingDataError.
    """
    m = spec.method
    p = spec.param
    if m is Method.HARD or m is Method.VANILLA:
        if gold is None:
            raise MissingDataError(f"method {m.value!r} needs gold labels")
        if m is Method.HARD:
            scalar = np.ndim(gold) == 0
            g = np.asarray(gold, dtype=np.float64)
            if not np.all((g == 0.0) | (g == 1.0)):
                raise InvalidInputError("gold labels must be 0 or 1")
            return _wrap(g.copy() if not scalar else g, scalar)
        return smooth_vanilla(gold, p, spec.num_classes)
    if m.uses_votes:
        if n_pos is None or n_annotators is None:
            raise MissingDataError(f"method {m.value!r} needs annotator vote counts")
        if m is Method.AGREEMENT_LINEAR:
            return smooth_agreement_linear(n_pos, n_annotators, p, spec.num_classes)
        if m is Method.AGREEMENT_PIECEWISE:
            return smooth_agreement_piecewise(n_pos, n_annotators, p, spec.num_classes)
        return smooth_agreement_nonlinear(n_pos, n_annotators, p)
    if confidence is None:
        raise MissingDataError(f"method {m.value!r} needs baseline confidences")
    if m is Method.CONFIDENCE_VANILLA:
        return smooth_confidence_vanilla(confidence, p, spec.num_classes)
    if m is Method.CONFIDENCE_LINEAR:
        return smooth_confidence_linear(confidence, p, spec.num_classes)
    if m is Method.CONFIDENCE_PIECEWISE:
        return smooth_confidence_piecewise(confidence, p)
    return smooth_confidence_nonlinear(confidence, p)


def apply_smoothing(spec: SmoothingSpec, example, baseline_confidence: Optional[float] = None) -> float:
    """Soft target for a single :class:`~smoothcal.data.AnnotatedExample`."""
    m = spec.method
    if m.uses_votes and example.n_pos is None:
        raise MissingDataError(f"example {example.id!r} has no annotator votes (needed by {m.value})")
    if m.uses_confidence and baseline_confidence is None:
        raise MissingDataError(
            f"example {example.id!r} has no baseline confidence (needed by {m.value})"
        )
    return smooth(
        spec,
        gold=example.gold,
        n_pos=example.n_pos,
        n_annotators=example.n_annotators,
        confidence=baseline_confidence,
    )
