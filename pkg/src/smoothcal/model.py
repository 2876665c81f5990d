"""
A small differentiable binary classifier trained on soft targets.

Two architectures are available: logistic regression (``hidden=0``) and a
single hidden layer of ``tanh`` units.  The output is always
``sigmoid(logit)`` and the loss is binary cross-entropy against a soft
target ``y`` in [0, 1].

Training runs several independent replicas (one per seed) as one stacked
computation: every array carries a leading replica axis and replicas never
exchange information.  :func:`train` is the one-replica case.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from . import metrics
from .errors import ConfigurationError, DivergenceError, InvalidInputError

CHECKPOINT_FORMAT = "smoothcal-model"
CHECKPOINT_VERSION = 1

# spawn keys separating the random streams of one seed
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser settings.  ``hidden=0`` selects logistic regression.

    ``init="zeros"`` starts from all-zero parameters instead of the
    default scaled uniform draw.
    """

    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    hidden: int = 16
    init: str = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not (math.isfinite(self.weight_decay) and self.weight_decay >= 0):
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        for name in ("epochs", "batch_size"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if int(self.hidden) != self.hidden or self.hidden < 0:
            raise ConfigurationError(f"hidden must be a non-negative integer, got {self.hidden!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.init not in ("uniform", "zeros"):
            raise ConfigurationError(f"init must be 'uniform' or 'zeros', got {self.init!r}")

    @property
    def architecture(self) -> str:
        return "logistic" if self.hidden == 0 else f"hidden{self.hidden}"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown training fields: {sorted(unknown)}")
        return cls(**d)


def _weight_names(hidden):
    return ("W1", "w2") if hidden else ("w",)


def _param_shapes(d, hidden):
    if hidden:
        return {"W1": (d, hidden), "b1": (hidden,), "w2": (hidden,), "b2": ()}
    return {"w": (d,), "b": ()}


@dataclass
class ClassifierParams:
    d: int
    hidden: int
    arrays: Dict[str, np.ndarray]

    @property
    def architecture(self) -> str:
        return "logistic" if self.hidden == 0 else f"hidden{self.hidden}"

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.d, self.hidden, {k: v.copy() for k, v in self.arrays.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.arrays[k]) for k in _param_shapes(self.d, self.hidden)])

    def with_flat(self, vec) -> "ClassifierParams":
        out, i = {}, 0
        for k, shape in _param_shapes(self.d, self.hidden).items():
            size = int(np.prod(shape))
            out[k] = np.asarray(vec[i:i + size], dtype=np.float64).reshape(shape)
            i += size
        return ClassifierParams(self.d, self.hidden, out)

    def equals(self, other: "ClassifierParams") -> bool:
        return (
            self.d == other.d
            and self.hidden == other.hidden
            and self.arrays.keys() == other.arrays.keys()
            and all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)
        )


def _init_arrays(seed, d, hidden, kind):
    shapes = _param_shapes(d, hidden)
    if kind == "zeros":
        return {k: np.zeros(s) for k, s in shapes.items()}
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_INIT_STREAM,)))
    out = {}
    for k, s in shapes.items():
        if k.startswith("b"):
            out[k] = np.zeros(s)
        else:
            bound = 1.0 / math.sqrt(s[0])
            out[k] = rng.uniform(-bound, bound, size=s)
    return out


def init(seed: int, d: int, hidden: int = 16, kind: str = "uniform") -> ClassifierParams:
    """Fresh parameters: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0."""
    if int(d) != d or d < 1:
        raise InvalidInputError(f"input dimension must be >= 1, got {d!r}")
    return ClassifierParams(int(d), int(hidden), _init_arrays(seed, int(d), int(hidden), kind))


# -- stacked kernels -----------------------------------------------------------
# A "stack" maps parameter names to arrays with a leading replica axis S.


def _stack(params: Sequence[ClassifierParams]) -> Dict[str, np.ndarray]:
    return {k: np.stack([p.arrays[k] for p in params]) for k in params[0].arrays}


def _unstack(stack, i, d, hidden) -> ClassifierParams:
    return ClassifierParams(d, hidden, {k: v[i].copy() for k, v in stack.items()})


def _logits(stack, X, hidden):
    """Logits of shape (S, n).  X is (n, d), shared by all replicas, or (S, n, d)."""
    if hidden:
        A = np.tanh(X @ stack["W1"] + stack["b1"][:, None, :])
        return (A @ stack["w2"][:, :, None])[..., 0] + stack["b2"][:, None], A
    if X.ndim == 2:
        return stack["w"] @ X.T + stack["b"][:, None], None
    return (X @ stack["w"][:, :, None])[..., 0] + stack["b"][:, None], None


def _bce_logits(z, y):
    # softplus(z) - y*z == -(y log p + (1-y) log(1-p)) with p = sigmoid(z)
    return np.logaddexp(0.0, z) - y * z


def _stack_loss(stack, X, y, hidden, weight_decay):
    z, _ = _logits(stack, X, hidden)
    loss = _bce_logits(z, y).mean(axis=1)
    if weight_decay:
        for k in _weight_names(hidden):
            w = stack[k]
            loss = loss + 0.5 * weight_decay * (w.reshape(w.shape[0], -1) ** 2).sum(axis=1)
    return loss


def _stack_grad(stack, Xb, yb, hidden, weight_decay):
    """Mean-loss gradients for a batch Xb (S, B, d) with targets yb (S, B)."""
    z, A = _logits(stack, Xb, hidden)
    g = (expit(z) - yb) / Xb.shape[1]
    if hidden:
        grads = {
            "w2": (g[:, None, :] @ A)[:, 0, :],
            "b2": g.sum(axis=1),
        }
        dA = g[..., None] * stack["w2"][:, None, :] * (1.0 - A * A)
        grads["W1"] = Xb.transpose(0, 2, 1) @ dA
        grads["b1"] = dA.sum(axis=1)
    else:
        grads = {"w": (g[:, None, :] @ Xb)[:, 0, :], "b": g.sum(axis=1)}
    if weight_decay:
        for k in _weight_names(hidden):
            grads[k] = grads[k] + weight_decay * stack[k]
    return grads


# -- single-model API ----------------------------------------------------------


def _check_features(params, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.ndim != 2 or X2.shape[1] != params.d:
        raise InvalidInputError(f"expected feature dimension {params.d}, got shape {X.shape}")
    if not np.all(np.isfinite(X2)):
        raise InvalidInputError("features must be finite")
    return X2, single


def logit(params: ClassifierParams, X):
    X2, single = _check_features(params, X)
    z, _ = _logits(_stack([params]), X2, params.hidden)
    return float(z[0, 0]) if single else z[0]


def forward(params: ClassifierParams, X):
    """Predicted positive-class probability for one vector or a matrix of rows."""
    X2, single = _check_features(params, X)
    z, _ = _logits(_stack([params]), X2, params.hidden)
    p = expit(z[0])
    return float(p[0]) if single else p


def soft_bce(p, y):
    """Cross-entropy ``-(y ln p + (1-y) ln(1-p))``, evaluated through the logit."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any((p <= 0) | (p >= 1)):
        raise InvalidInputError("p must lie strictly inside (0, 1)")
    if np.any((y < 0) | (y > 1)):
        raise InvalidInputError("soft targets must lie in [0, 1]")
    z = np.log(p) - np.log1p(-p)
    out = _bce_logits(z, y)
    return float(out) if out.ndim == 0 else out


def loss(params: ClassifierParams, X, y, weight_decay: float = 0.0) -> float:
    """Mean soft cross-entropy over rows of X plus ``weight_decay/2 * |weights|^2``.

    Biases are not decayed.
    """
    X2, _ = _check_features(params, X)
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    return float(_stack_loss(_stack([params]), X2, y, params.hidden, weight_decay)[0])


def gradient(params: ClassifierParams, X, y, weight_decay: float = 0.0) -> Dict[str, np.ndarray]:
    """Gradient of :func:`loss` with respect to every parameter array."""
    X2, _ = _check_features(params, X)
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    if y.shape[1] != X2.shape[0] or X2.shape[0] == 0:
        raise InvalidInputError("batch must be non-empty with one target per row")
    grads = _stack_grad(_stack([params]), X2[None], y, params.hidden, weight_decay)
    return {k: v[0] for k, v in grads.items()}


def logit_gradient(p, y):
    """Derivative of the cross-entropy with respect to the output logit: ``p - y``."""
    return np.asarray(p, dtype=np.float64) - np.asarray(y, dtype=np.float64)


def confidences(model, X) -> np.ndarray:
    """Positive-class probability for every row of X, in order."""
    params = model.params if isinstance(model, TrainedModel) else model
    X2, _ = _check_features(params, X)
    return forward(params, X2)


# -- training ------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    reports: Dict[str, metrics.CalibrationReport] = field(default_factory=dict)


@dataclass
class TrainedModel:
    params: ClassifierParams
    config: TrainConfig
    history: List[EpochRecord]
    snapshots: Dict[int, ClassifierParams] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.seed


def _epoch_metrics(probs, labels):
    try:
        a = metrics.auc(probs, labels)
    except metrics.UndefinedMetricError:
        a = float("nan")
    return metrics.CalibrationReport(auc=a, ece=metrics.ece_score(probs, labels), n=len(labels))


def train_replicas(
    X,
    targets,
    config: TrainConfig,
    seeds: Sequence[int],
    monitor: Optional[Mapping[str, Tuple[np.ndarray, np.ndarray]]] = None,
    snapshot_epochs: Sequence[int] = (),
) -> List[TrainedModel]:
    """Train one independent model per seed on (X, targets).

    Parameters
    ----------
    X : array, shape (n, d)
    targets : array, shape (n,) or (len(seeds), n)
        soft targets in [0, 1]; a 2-D array gives each replica its own.
    config : TrainConfig
        its ``seed`` field is ignored in favour of ``seeds``.
    monitor : mapping of split name to (features, gold labels), optional
        evaluated after every epoch; evaluation never feeds back into training.
    snapshot_epochs : epochs (1-based) at which to keep a copy of the parameters.

    Each replica's mini-batch order comes from its own generator seeded by
    (seed, epoch), so a replica's trajectory does not depend on which other
    seeds share the stack.

    Raises
    ------
    DivergenceError
        if the end-of-epoch training loss of any replica is not finite.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("training features must be a non-empty 2-D array")
    n, d = X.shape
    seeds = [int(s) for s in seeds]
    S = len(seeds)
    if S == 0:
        raise InvalidInputError("need at least one seed")
    T = np.asarray(targets, dtype=np.float64)
    if T.ndim == 1:
        T = np.broadcast_to(T, (S, n))
    if T.shape != (S, n):
        raise InvalidInputError(f"targets must have shape ({n},) or ({S}, {n}), got {T.shape}")
    if not np.all((T >= 0) & (T <= 1)):
        raise InvalidInputError("soft targets must lie in [0, 1]")
    monitor = dict(monitor or {})
    for name, (Xm, ym) in monitor.items():
        if np.asarray(Xm).shape[1:] != (d,):
            raise InvalidInputError(f"monitor split {name!r} has the wrong feature dimension")

    h = config.hidden
    stack = _stack([ClassifierParams(d, h, _init_arrays(s, d, h, config.init)) for s in seeds])
    velocity = {k: np.zeros_like(v) for k, v in stack.items()}
    lr, mu, wd, B = config.learning_rate, config.momentum, config.weight_decay, config.batch_size
    rows = np.arange(S)[:, None]
    histories: List[List[EpochRecord]] = [[] for _ in seeds]
    snapshots: List[Dict[int, ClassifierParams]] = [{} for _ in seeds]
    keep = set(int(e) for e in snapshot_epochs)

    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            order = np.stack([
                np.random.default_rng(
                    np.random.SeedSequence(s, spawn_key=(_SHUFFLE_STREAM, epoch))
                ).permutation(n)
                for s in seeds
            ])
            for start in range(0, n, B):
                idx = order[:, start:start + B]
                grads = _stack_grad(stack, X[idx], T[rows, idx], h, wd)
                for k in stack:
                    v = velocity[k]
                    v *= mu
                    v -= lr * grads[k]
                    stack[k] += v

            epoch_loss = _stack_loss(stack, X, T, h, wd)
            bad = ~np.isfinite(epoch_loss)
            if np.any(bad):
                s = seeds[int(np.argmax(bad))]
                raise DivergenceError(
                    f"training diverged at epoch {epoch} (learning_rate={lr}, seed={s})",
                    epoch=epoch,
                    learning_rate=lr,
                    seed=s,
                )
            probs = {}
            for name, (Xm, _) in monitor.items():
                zm, _ = _logits(stack, np.asarray(Xm, dtype=np.float64), h)
                probs[name] = expit(zm)
            for i in range(S):
                reps = {name: _epoch_metrics(probs[name][i], monitor[name][1]) for name in monitor}
                histories[i].append(EpochRecord(epoch, float(epoch_loss[i]), reps))
                if epoch in keep:
                    snapshots[i][epoch] = _unstack(stack, i, d, h)

    return [
        TrainedModel(
            params=_unstack(stack, i, d, h),
            config=replace(config, seed=s),
            history=histories[i],
            snapshots=snapshots[i],
        )
        for i, s in enumerate(seeds)
    ]


def train(X, targets, config: TrainConfig, monitor=None, snapshot_epochs=()) -> TrainedModel:
    """Train a single model with ``config.seed``."""
    return train_replicas(X, targets, config, [config.seed], monitor, snapshot_epochs)[0]


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(params: ClassifierParams, path) -> None:
    """JSON checkpoint; floats are written with ``repr`` precision so a reload is bit-exact."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": params.architecture,
        "d": params.d,
        "hidden": params.hidden,
        "arrays": {
            k: {"shape": list(np.shape(v)), "data": np.ravel(v).tolist()}
            for k, v in params.arrays.items()
        },
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> ClassifierParams:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidInputError(f"{path} is not a smoothcal checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {payload.get('version')!r}")
    d, hidden = int(payload["d"]), int(payload["hidden"])
    arrays = {}
    for k, shape in _param_shapes(d, hidden).items():
        entry = payload["arrays"][k]
        if tuple(entry["shape"]) != shape:
            raise InvalidInputError(f"checkpoint array {k!r} has shape {entry['shape']}, expected {list(shape)}")
        arrays[k] = np.array(entry["data"], dtype=np.float64).reshape(shape)
    return ClassifierParams(d, hidden, arrays)
