"""
Experiment orchestration: multi-seed runs, the two-stage confidence pipeline,
hyperparameter sweeps, best-model selection and report files.

Report files
------------
``emit_report`` writes into one directory:

summary.json
    configuration, provenance and every aggregate; enough to re-render the
    tables without retraining
per_seed.csv
    final test (and train) AUC/ECE for every seed
curves.csv
    ``epoch,seed,split,auc,ece`` for every epoch (sweeps add a leading
    ``hyperparameter`` column)
sweep.csv
    sweeps only; ``hyperparameter,mean_auc,std_auc,mean_ece,std_ece,
    delta_auc,ece_improvement_pct`` with the baseline as the first row

AUC and ECE in every report file are percentage points (x100) printed with
4 decimals; JSON numbers are rounded to 6 decimals.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__, data, metrics, model
from .errors import ConfigurationError, DivergenceError, InvalidInputError
from .smoothing import Method, SmoothingSpec, smooth

DEFAULT_SEEDS = tuple(range(10))
PRECISION = 4

DEFAULT_GRIDS = {
    "alpha": tuple(round(0.05 * i, 2) for i in range(1, 20)),
    "omega": tuple(round(0.05 * i, 2) for i in range(1, 11)),
    "phi": tuple(float(i) for i in range(1, 16)),
}


def default_grid(method) -> Tuple[float, ...]:
    name = Method(method).hyperparameter
    if name is None:
        raise ConfigurationError("the hard-label method has no hyperparameter to sweep")
    return DEFAULT_GRIDS[name]


def stage_two_seed(seed: int) -> int:
    """Seed for the retraining stage, derived from the run seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(2,))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """One labeling method trained over several seeds.

    ``dataset`` is a generator configuration or a path to a dataset
    directory.  ``stage_two`` (confidence methods only) defaults to
    ``train``.  ``confidence_checkpoint`` is ``"final"`` or the stage-one
    epoch whose model supplies the confidences.
    """

    name: str = "experiment"
    dataset: Union[data.GeneratorConfig, str] = data.GeneratorConfig()
    smoothing: SmoothingSpec = SmoothingSpec(Method.HARD)
    train: model.TrainConfig = model.TrainConfig()
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    stage_two: Optional[model.TrainConfig] = None
    confidence_checkpoint: Union[str, int] = "final"
    n_bins: int = metrics.DEFAULT_BINS

    def __post_init__(self):
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigurationError("seeds must be non-empty")
        if len(set(seeds)) != len(seeds):
            raise ConfigurationError("seeds must be distinct")
        if any(s < 0 for s in seeds):
            raise ConfigurationError("seeds must be non-negative")
        object.__setattr__(self, "seeds", seeds)
        if isinstance(self.dataset, Path):
            object.__setattr__(self, "dataset", str(self.dataset))
        ck = self.confidence_checkpoint
        if ck != "final":
            if isinstance(ck, bool) or not isinstance(ck, int) or not 1 <= ck <= self.train.epochs:
                raise ConfigurationError(
                    f"confidence_checkpoint must be 'final' or an epoch in 1..{self.train.epochs}, got {ck!r}"
                )
        if int(self.n_bins) != self.n_bins or self.n_bins < 1:
            raise ConfigurationError(f"n_bins must be a positive integer, got {self.n_bins!r}")

    @property
    def stage_two_config(self) -> model.TrainConfig:
        return self.stage_two or self.train

    def to_dict(self):
        ds = self.dataset.to_dict() if isinstance(self.dataset, data.GeneratorConfig) else {"path": self.dataset}
        return {
            "name": self.name,
            "dataset": ds,
            "smoothing": self.smoothing.to_dict(),
            "train": self.train.to_dict(),
            "seeds": list(self.seeds),
            "stage_two": None if self.stage_two is None else self.stage_two.to_dict(),
            "confidence_checkpoint": self.confidence_checkpoint,
            "n_bins": self.n_bins,
        }

    @classmethod
    def from_dict(cls, d):
        known = {"name", "dataset", "smoothing", "train", "seeds", "stage_two", "confidence_checkpoint", "n_bins"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown experiment fields: {sorted(unknown)}")
        kw = {}
        if "name" in d:
            kw["name"] = str(d["name"])
        if "dataset" in d:
            ds = d["dataset"]
            if isinstance(ds, str):
                kw["dataset"] = ds
            elif isinstance(ds, dict) and set(ds) == {"path"}:
                kw["dataset"] = str(ds["path"])
            elif isinstance(ds, dict):
                kw["dataset"] = data.GeneratorConfig.from_dict(ds)
            else:
                raise ConfigurationError("dataset must be a path or a generator configuration")
        if "smoothing" in d:
            kw["smoothing"] = SmoothingSpec.from_dict(d["smoothing"])
        if "train" in d:
            kw["train"] = model.TrainConfig.from_dict(d["train"])
        if "seeds" in d:
            kw["seeds"] = tuple(d["seeds"])
        if d.get("stage_two") is not None:
            kw["stage_two"] = model.TrainConfig.from_dict(d["stage_two"])
        for k in ("confidence_checkpoint", "n_bins"):
            if k in d:
                kw[k] = d[k]
        return cls(**kw)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_dataset(source) -> data.Dataset:
    if isinstance(source, data.GeneratorConfig):
        return data.generate(source)
    return data.load(source)


@dataclass
class SeedRun:
    seed: int
    test: metrics.CalibrationReport
    train: Optional[metrics.CalibrationReport] = None
    curves: List[model.EpochRecord] = field(default_factory=list)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    summary: metrics.Summary
    runs: List[SeedRun] = field(default_factory=list)
    provenance: Dict[str, str] = field(default_factory=dict)

    @property
    def per_seed(self) -> List[metrics.CalibrationReport]:
        return [r.test for r in self.runs]

    @property
    def hyperparameter(self) -> Optional[float]:
        return self.config.smoothing.param


@dataclass
class SweepResult:
    method: Method
    grid: Tuple[float, ...]
    points: List[ExperimentResult]
    baseline: ExperimentResult

    def __post_init__(self):
        self.method = Method(self.method)
        self.grid = tuple(float(g) for g in self.grid)
        if len(self.grid) != len(self.points):
            raise InvalidInputError("one experiment result is needed per grid value")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise InvalidInputError("grid values must be strictly increasing")

    def delta_auc(self, i) -> float:
        return self.points[i].summary.auc_mean - self.baseline.summary.auc_mean

    def ece_improvement_pct(self, i) -> float:
        return ece_improvement_pct(self.baseline.summary.ece_mean, self.points[i].summary.ece_mean)


def ece_improvement_pct(baseline_ece: float, method_ece: float) -> float:
    """Relative ECE reduction in percent, ``100 * (base - method) / base``; 0 for a zero baseline."""
    if baseline_ece == 0:
        return 0.0
    return 100.0 * (baseline_ece - method_ece) / baseline_ece


@dataclass(frozen=True)
class Selection:
    value: Optional[float]
    index: Optional[int]
    reason: str

    @property
    def empty(self) -> bool:
        return self.index is None


def select_best(sweep: SweepResult) -> Selection:
    """Lowest mean ECE among grid points whose mean AUC beats the baseline.

    Ties on ECE go to the smaller hyperparameter.  When no point beats the
    baseline AUC the selection is empty.
    """
    base_auc = sweep.baseline.summary.auc_mean
    qualifying = [i for i, p in enumerate(sweep.points) if p.summary.auc_mean > base_auc]
    if not qualifying:
        return Selection(None, None, f"no grid point has mean AUC above the baseline ({base_auc:.4f})")
    best = min(qualifying, key=lambda i: (sweep.points[i].summary.ece_mean, sweep.grid[i]))
    p = sweep.points[best].summary
    return Selection(
        sweep.grid[best],
        best,
        f"lowest mean ECE ({p.ece_mean:.4f}) among {len(qualifying)} of {len(sweep.points)} "
        f"grid points with mean AUC above the baseline ({base_auc:.4f})",
    )


# -- running ---------------------------------------------------------------------


def _require_test(ds: data.Dataset):
    if len(ds.test) == 0:
        raise ConfigurationError("the dataset has no test split to evaluate on")


def _monitor(ds: data.Dataset):
    return {"train": (ds.train.X, ds.train.gold), "test": (ds.test.X, ds.test.gold)}


def _train(X, targets, tc, seeds, ds, snapshot_epochs=(), stage=None):
    try:
        return model.train_replicas(X, targets, tc, seeds, _monitor(ds), snapshot_epochs)
    except DivergenceError as exc:
        if stage is not None:
            exc.stage = stage
            exc.args = (f"{stage}: {exc.args[0]}",)
        raise


def _finish(config: ExperimentConfig, ds: data.Dataset, models, seeds) -> ExperimentResult:
    runs = []
    for seed, m in zip(seeds, models):
        p_test = model.forward(m.params, ds.test.X)
        p_train = model.forward(m.params, ds.train.X)
        runs.append(SeedRun(
            seed=seed,
            test=metrics.evaluate(p_test, ds.test.gold, config.n_bins),
            train=metrics.evaluate(p_train, ds.train.gold, config.n_bins),
            curves=m.history,
        ))
    return ExperimentResult(
        config=config,
        summary=metrics.aggregate([r.test for r in runs]),
        runs=runs,
        provenance={
            "config_hash": config.config_hash(),
            "dataset_fingerprint": ds.fingerprint(),
            "version": __version__,
        },
    )


def _dataset(config, dataset):
    ds = dataset if dataset is not None else load_dataset(config.dataset)
    _require_test(ds)
    return ds


def run_baseline(config: ExperimentConfig, dataset: Optional[data.Dataset] = None) -> ExperimentResult:
    """Train on gold majority labels for every seed."""
    if config.smoothing.method is not Method.HARD:
        raise ConfigurationError("run_baseline needs the hard-label method")
    ds = _dataset(config, dataset)
    models = _train(ds.train.X, ds.train.gold.astype(np.float64), config.train, config.seeds, ds)
    return _finish(config, ds, models, config.seeds)


def run_agreement(config: ExperimentConfig, dataset: Optional[data.Dataset] = None) -> ExperimentResult:
    """Vanilla or agreement-aware targets, computed once and shared by all seeds."""
    m = config.smoothing.method
    if not (m.uses_votes or m is Method.VANILLA):
        raise ConfigurationError(f"run_agreement cannot run method {m.value!r}")
    ds = _dataset(config, dataset)
    tr = ds.train
    targets = smooth(config.smoothing, gold=tr.gold, n_pos=tr.n_pos, n_annotators=tr.n_annotators)
    models = _train(tr.X, targets, config.train, config.seeds, ds)
    return _finish(config, ds, models, config.seeds)


def stage_one_confidences(config: ExperimentConfig, ds: data.Dataset) -> np.ndarray:
    """Train hard-label models per seed and return their training-set confidences.

    Returns an array of shape (len(seeds), n_train).
    """
    ck = config.confidence_checkpoint
    snaps = () if ck == "final" else (ck,)
    models = _train(
        ds.train.X, ds.train.gold.astype(np.float64), config.train, config.seeds, ds, snaps, stage="stage 1"
    )
    return _confidences_from(models, ck, ds)


def _confidences_from(models, checkpoint, ds):
    out = []
    for m in models:
        params = m.params if checkpoint == "final" else m.snapshots[checkpoint]
        out.append(model.confidences(params, ds.train.X))
    return np.stack(out)


def run_confidence(
    config: ExperimentConfig,
    dataset: Optional[data.Dataset] = None,
    stage_one: Optional[np.ndarray] = None,
) -> ExperimentResult:
    """Two-stage pipeline: hard-label model, then retraining on confidence-aware targets.

    Stage two starts from a fresh initialisation seeded by
    :func:`stage_two_seed` and sees only the training features and the
    per-seed targets.  ``stage_one`` may pass precomputed confidences
    (shape ``(len(seeds), n_train)``) to skip the first stage.
    """
    m = config.smoothing.method
    if not m.uses_confidence:
        raise ConfigurationError(f"run_confidence cannot run method {m.value!r}")
    ds = _dataset(config, dataset)
    conf = stage_one if stage_one is not None else stage_one_confidences(config, ds)
    conf = np.asarray(conf, dtype=np.float64)
    if conf.shape != (len(config.seeds), len(ds.train)):
        raise InvalidInputError("stage-one confidences must have shape (len(seeds), n_train)")
    targets = np.stack([smooth(config.smoothing, confidence=c) for c in conf])
    seeds2 = [stage_two_seed(s) for s in config.seeds]
    models = _train(ds.train.X, targets, config.stage_two_config, seeds2, ds, stage="stage 2")
    return _finish(config, ds, models, config.seeds)


def run_experiment(config: ExperimentConfig, dataset: Optional[data.Dataset] = None) -> ExperimentResult:
    m = config.smoothing.method
    if m is Method.HARD:
        return run_baseline(config, dataset)
    if m.uses_confidence:
        return run_confidence(config, dataset)
    return run_agreement(config, dataset)


def _run_point(args):
    config, ds, conf = args
    if config.smoothing.method.uses_confidence:
        return run_confidence(config, ds, stage_one=conf)
    return run_agreement(config, ds)


@dataclass
class BaselineRun:
    """Hard-label result plus the stage-one confidences it supplies.

    ``confidences`` has shape (len(seeds), n_train) and was read from the
    model at ``checkpoint``.
    """

    result: ExperimentResult
    confidences: np.ndarray
    checkpoint: Union[str, int]
    dataset_fingerprint: str


def prepare_baseline(config: ExperimentConfig, dataset: Optional[data.Dataset] = None) -> BaselineRun:
    """Train the hard-label models a sweep compares against (and, for confidence methods, starts from)."""
    ds = _dataset(config, dataset)
    ck = config.confidence_checkpoint
    snaps = () if ck == "final" else (ck,)
    models = _train(ds.train.X, ds.train.gold.astype(np.float64), config.train, config.seeds, ds, snaps)
    base_cfg = replace(config, smoothing=SmoothingSpec(Method.HARD))
    return BaselineRun(
        result=_finish(base_cfg, ds, models, config.seeds),
        confidences=_confidences_from(models, ck, ds),
        checkpoint=ck,
        dataset_fingerprint=ds.fingerprint(),
    )


def sweep(
    method,
    grid: Optional[Sequence[float]],
    config: ExperimentConfig,
    dataset: Optional[data.Dataset] = None,
    jobs: int = 1,
    baseline: Optional[BaselineRun] = None,
) -> SweepResult:
    """Run the baseline and one experiment per grid value on the same seeds and data.

    Every grid value is validated before any training starts.  For
    confidence methods the baseline models double as stage one, since both
    are hard-label runs of ``config.train`` on the same seeds.  A
    ``baseline`` from :func:`prepare_baseline` with the same configuration
    can be passed to share it between sweeps.  ``jobs > 1`` runs grid
    points in worker processes; results are merged in grid order.
    """
    method = Method(method)
    if method is Method.HARD:
        raise ConfigurationError("cannot sweep the hard-label method")
    grid = tuple(float(g) for g in (default_grid(method) if grid is None else grid))
    if not grid:
        raise ConfigurationError("grid must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigurationError("grid values must be strictly increasing")
    specs = [SmoothingSpec(method, g) for g in grid]

    ds = _dataset(config, dataset)
    if baseline is None:
        baseline = prepare_baseline(config, ds)
    else:
        same = replace(baseline.result.config, smoothing=config.smoothing, name=config.name) == config
        if not same or baseline.dataset_fingerprint != ds.fingerprint():
            raise ConfigurationError("the supplied baseline was run with a different configuration or dataset")
    conf = baseline.confidences if method.uses_confidence else None

    work = [(replace(config, smoothing=s), ds, conf) for s in specs]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_run_point, work))
    else:
        points = [_run_point(w) for w in work]
    return SweepResult(method, grid, points, baseline.result)


# -- reports ---------------------------------------------------------------------


def _f(x: float) -> str:
    return f"{x:.{PRECISION}f}"


def _pp(x: float) -> str:
    return _f(100.0 * x)


def _r6(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return round(float(x), 6)


def _hp(x: Optional[float]) -> str:
    return "baseline" if x is None else f"{x:.12g}"


def _summary_json(s: metrics.Summary):
    return {
        "n": s.n,
        "auc_mean": _r6(s.auc_mean),
        "auc_std": _r6(s.auc_std),
        "ece_mean": _r6(s.ece_mean),
        "ece_std": _r6(s.ece_std),
        "auc": s.auc_row,
        "ece": s.ece_row,
    }


def _result_json(r: ExperimentResult):
    return {
        "method": r.config.smoothing.method.value,
        "hyperparameter": r.hyperparameter,
        "summary": _summary_json(r.summary),
        "per_seed": [
            {
                "seed": run.seed,
                "auc": _r6(100 * run.test.auc),
                "ece": _r6(100 * run.test.ece),
                "train_auc": None if run.train is None else _r6(100 * run.train.auc),
                "train_ece": None if run.train is None else _r6(100 * run.train.ece),
            }
            for run in r.runs
        ],
    }


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _seed_rows(r: ExperimentResult, prefix=()):
    for run in r.runs:
        yield list(prefix) + [
            run.seed,
            _pp(run.test.auc),
            _pp(run.test.ece),
            "" if run.train is None else _pp(run.train.auc),
            "" if run.train is None else _pp(run.train.ece),
            run.test.n,
        ]


def _curve_rows(r: ExperimentResult, prefix=()):
    for run in r.runs:
        for rec in run.curves:
            for split in sorted(rec.reports):
                rep = rec.reports[split]
                yield list(prefix) + [rec.epoch, run.seed, split, _pp(rep.auc), _pp(rep.ece)]


SEED_HEADER = ["seed", "auc", "ece", "train_auc", "train_ece", "n_test"]
CURVE_HEADER = ["epoch", "seed", "split", "auc", "ece"]
SWEEP_HEADER = ["hyperparameter", "mean_auc", "std_auc", "mean_ece", "std_ece", "delta_auc", "ece_improvement_pct"]


def sweep_rows(sw: SweepResult) -> List[List[str]]:
    b = sw.baseline.summary
    rows = [["baseline", _f(b.auc_mean), _f(b.auc_std), _f(b.ece_mean), _f(b.ece_std), _f(0.0), _f(0.0)]]
    for i, (g, p) in enumerate(zip(sw.grid, sw.points)):
        s = p.summary
        rows.append([
            _hp(g), _f(s.auc_mean), _f(s.auc_std), _f(s.ece_mean), _f(s.ece_std),
            _f(sw.delta_auc(i)), _f(sw.ece_improvement_pct(i)),
        ])
    return rows


def emit_report(result: Union[ExperimentResult, SweepResult], out_dir) -> Path:
    """Write the report files for an experiment or a sweep into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(result, SweepResult):
        sel = select_best(result)
        cfg = result.baseline.config
        summary = {
            "kind": "sweep",
            "name": cfg.name,
            "method": result.method.value,
            "grid": list(result.grid),
            "config": replace(cfg, smoothing=SmoothingSpec(Method.HARD)).to_dict(),
            "provenance": dict(result.baseline.provenance),
            "baseline": _result_json(result.baseline),
            "points": [_result_json(p) for p in result.points],
            "selected": None if sel.empty else {
                "hyperparameter": sel.value,
                "index": sel.index,
                "summary": _summary_json(result.points[sel.index].summary),
            },
            "selection_reason": sel.reason,
        }
        _write_csv(out / "sweep.csv", SWEEP_HEADER, sweep_rows(result))
        seed_rows = list(_seed_rows(result.baseline, ["baseline"]))
        curve_rows = list(_curve_rows(result.baseline, ["baseline"]))
        for g, p in zip(result.grid, result.points):
            seed_rows += _seed_rows(p, [_hp(g)])
            curve_rows += _curve_rows(p, [_hp(g)])
        _write_csv(out / "per_seed.csv", ["hyperparameter"] + SEED_HEADER, seed_rows)
        _write_csv(out / "curves.csv", ["hyperparameter"] + CURVE_HEADER, curve_rows)
    else:
        summary = {
            "kind": "experiment",
            "name": result.config.name,
            "config": result.config.to_dict(),
            "provenance": dict(result.provenance),
            **_result_json(result),
        }
        _write_csv(out / "per_seed.csv", SEED_HEADER, _seed_rows(result))
        _write_csv(out / "curves.csv", CURVE_HEADER, _curve_rows(result))
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return out


def load_report(out_dir) -> dict:
    """Read back ``summary.json`` from a report directory."""
    path = Path(out_dir) / "summary.json"
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def render_report(summary: dict) -> str:
    """Human-readable table for a stored report: one mean ± std row per model, or the sweep grid."""
    lines = []
    if summary["kind"] == "experiment":
        lines.append(f"{'Model':<32} {'AUC':>12} {'ECE':>12}")
        label = summary["method"] if summary["hyperparameter"] is None else (
            f"{summary['method']} ({summary['hyperparameter']:g})"
        )
        s = summary["summary"]
        lines.append(f"{label:<32} {s['auc']:>12} {s['ece']:>12}")
        return "\n".join(lines)
    lines.append(f"sweep of {summary['method']} over {len(summary['grid'])} values")
    lines.append(f"{'hyperparameter':<16} {'AUC':>12} {'ECE':>12} {'dAUC':>8} {'ECE impr %':>11}")
    b = summary["baseline"]["summary"]
    lines.append(f"{'baseline':<16} {b['auc']:>12} {b['ece']:>12} {0.0:>8.2f} {0.0:>11.1f}")
    for g, p in zip(summary["grid"], summary["points"]):
        s = p["summary"]
        d_auc = s["auc_mean"] - b["auc_mean"]
        impr = 100.0 * (b["ece_mean"] - s["ece_mean"]) / b["ece_mean"] if b["ece_mean"] else 0.0
        lines.append(f"{g:<16g} {s['auc']:>12} {s['ece']:>12} {d_auc:>8.2f} {impr:>11.1f}")
    sel = summary["selected"]
    if sel is None:
        lines.append(f"selected: none ({summary['selection_reason']})")
    else:
        lines.append(f"selected: {sel['hyperparameter']:g} ({summary['selection_reason']})")
    return "\n".join(lines)
