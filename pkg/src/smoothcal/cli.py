"""
Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 I/O or parse error,
4 numerical failure (training divergence, failed self-test).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, harness, model, selftest
from .errors import (
    ConfigurationError,
    DivergenceError,
    InvalidInputError,
    MissingDataError,
    ParseError,
)
from .smoothing import Method, SmoothingSpec, smooth

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

METHODS = [m.value for m in Method]


def parse_grid(text: str):
    """Comma-separated values; ``a,b,...,c`` expands to the progression a, b, ... up to c."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if "..." not in parts:
        return [float(p) for p in parts]
    i = parts.index("...")
    if i < 2 or i != len(parts) - 2:
        raise ConfigurationError("grid ellipsis must look like 'a,b,...,c'")
    head = [float(p) for p in parts[:i]]
    stop = float(parts[-1])
    step = head[-1] - head[-2]
    if step <= 0:
        raise ConfigurationError("grid ellipsis needs an increasing start")
    n = int(round((stop - head[0]) / step))
    vals = [round(head[0] + k * step, 10) for k in range(n + 1)]
    if abs(vals[-1] - stop) > 1e-9 * max(1.0, abs(stop)):
        raise ConfigurationError(f"grid end {stop:g} is not on the progression from {head[0]:g} by {step:g}")
    return vals


def parse_seeds(text: str):
    """``10`` means seeds 0..9; ``3,7,11`` is an explicit list."""
    if "," in text:
        return tuple(int(s) for s in text.split(",") if s.strip())
    n = int(text)
    if n < 1:
        raise ConfigurationError("--seeds must be a positive count or a comma-separated list")
    return tuple(range(n))


def _add_generator_flags(p):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-test", type=int)
    g.add_argument("--d", type=int, help="feature dimension")
    g.add_argument("--n-annotators", type=int)
    g.add_argument("--difficulty-a", type=float)
    g.add_argument("--difficulty-b", type=float)
    g.add_argument("--class-mean", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--data-seed", type=int, help="generator seed")
    g.add_argument("--tie-break", action="store_true", help="allow even N; ties go to the positive class")


def _generator_config(args, base=None) -> data.GeneratorConfig:
    fields = {
        "n_train": args.n_train,
        "n_test": args.n_test,
        "d": args.d,
        "n_annotators": args.n_annotators,
        "difficulty_a": args.difficulty_a,
        "difficulty_b": args.difficulty_b,
        "class_mean": args.class_mean,
        "noise": args.noise,
        "seed": getattr(args, "data_seed", None),
    }
    kw = base.to_dict() if base is not None else {}
    kw.update({k: v for k, v in fields.items() if v is not None})
    if args.tie_break:
        kw["tie_break"] = True
    return data.GeneratorConfig(**kw)


def _add_train_flags(p):
    p.add_argument("--config", help="experiment configuration JSON; flags override it")
    p.add_argument("--dataset", help="dataset directory (default: synthetic data from the generator flags)")
    _add_generator_flags(p)
    p.add_argument("--name", help="experiment name, used for the default output directory")
    p.add_argument("--seeds", type=parse_seeds, help="seed count (0..n-1) or comma-separated list")
    t = p.add_argument_group("training")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", "--learning-rate", dest="learning_rate", type=float)
    t.add_argument("--momentum", type=float)
    t.add_argument("--weight-decay", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--hidden", type=int, help="hidden units; 0 for logistic regression")
    t.add_argument("--init", choices=["uniform", "zeros"])
    t.add_argument("--checkpoint", default=None,
                   help="stage-one model for confidence methods: 'final' or an epoch number")
    p.add_argument("--out", help="report directory (default reports/<name>)")
    p.add_argument("--json", action="store_true", help="print the summary as JSON")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")


def _experiment_config(args, method, param) -> harness.ExperimentConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = harness.ExperimentConfig.from_dict(json.load(fh))
    else:
        cfg = harness.ExperimentConfig()
    kw = {}
    if args.dataset:
        kw["dataset"] = args.dataset
    else:
        base = cfg.dataset if isinstance(cfg.dataset, data.GeneratorConfig) else None
        gen_flags = [args.n_train, args.n_test, args.d, args.n_annotators, args.difficulty_a,
                     args.difficulty_b, args.class_mean, args.noise, args.data_seed]
        if base is not None or any(v is not None for v in gen_flags) or args.tie_break:
            kw["dataset"] = _generator_config(args, base)
    tr = {
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "momentum": args.momentum,
        "weight_decay": args.weight_decay,
        "batch_size": args.batch_size,
        "hidden": args.hidden,
        "init": args.init,
    }
    tr = {k: v for k, v in tr.items() if v is not None}
    if tr:
        kw["train"] = replace(cfg.train, **tr)
    if args.seeds is not None:
        kw["seeds"] = args.seeds
    if args.checkpoint is not None:
        kw["confidence_checkpoint"] = "final" if args.checkpoint == "final" else int(args.checkpoint)
    if method is not None:
        kw["smoothing"] = SmoothingSpec(method, param)
    if args.name:
        kw["name"] = args.name
    elif not args.config:
        kw["name"] = method if param is None else f"{method}-{param:g}"
    return replace(cfg, **kw)


def cmd_gen_data(args):
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            base = data.GeneratorConfig.from_dict(json.load(fh))
    else:
        base = None
    cfg = _generator_config(args, base)
    ds = data.generate(cfg)
    data.save(ds, args.out)
    info = {
        "out": str(args.out),
        "n_train": len(ds.train),
        "n_test": len(ds.test),
        "d": ds.d,
        "N": ds.N,
        "unanimity_train": round(data.unanimity_fraction(ds.train), 6),
        "positive_fraction_train": round(float(np.mean(ds.train.gold)), 6),
    }
    if args.json:
        print(json.dumps(info, indent=2, sort_keys=True))
    else:
        print(f"wrote {info['n_train']} train / {info['n_test']} test examples to {args.out}")
        print(f"d={info['d']} N={info['N']} unanimous={info['unanimity_train']:.4f} "
              f"positive={info['positive_fraction_train']:.4f}")
    return EXIT_OK


def cmd_smooth(args):
    spec = SmoothingSpec(args.method, args.param)
    if spec.method.uses_confidence and not args.confidences:
        raise ConfigurationError(f"method {spec.method.value!r} needs --confidences")
    path = Path(args.dataset)
    split = data.load(path).train
    conf = None
    if spec.method.uses_confidence:
        table = data.read_confidences(args.confidences)
        missing = [i for i in split.ids if i not in table]
        if missing:
            raise MissingDataError(f"no confidence for example {missing[0]!r}")
        conf = np.array([table[i] for i in split.ids])
    if spec.method.uses_votes and not split.has_votes:
        raise MissingDataError(f"method {spec.method.value!r} needs vote counts, {path} has none")
    y = smooth(spec, gold=split.gold, n_pos=split.n_pos, n_annotators=split.n_annotators, confidence=conf)
    data.write_targets(args.out, split.ids, np.atleast_1d(y))
    print(f"wrote {len(split)} targets ({spec.label()}) to {args.out}")
    return EXIT_OK


def _out_dir(args, cfg):
    return Path(args.out) if args.out else Path("reports") / cfg.name


def _print_summary(summary, as_json):
    if as_json:
        print(json.dumps(summary, indent=2, sort_keys=True, ensure_ascii=False))
    else:
        print(harness.render_report(summary))


def cmd_train(args):
    cfg = _experiment_config(args, args.method, args.param)
    ds = harness.load_dataset(cfg.dataset)
    result = harness.run_experiment(cfg, ds)
    out = _out_dir(args, cfg)
    harness.emit_report(result, out)
    if args.save_models:
        _save_models(cfg, ds, out)
    _print_summary(harness.load_report(out), args.json)
    return EXIT_OK


def _save_models(cfg, ds, out):
    # the harness keeps metrics only, so retrain deterministically to recover parameters
    mdir = out / "models"
    mdir.mkdir(parents=True, exist_ok=True)
    method = cfg.smoothing.method
    tr = ds.train
    if method.uses_confidence:
        conf = harness.stage_one_confidences(cfg, ds)
        targets = np.stack([smooth(cfg.smoothing, confidence=c) for c in conf])
        seeds = [harness.stage_two_seed(s) for s in cfg.seeds]
        tc = cfg.stage_two_config
    else:
        targets = smooth(cfg.smoothing, gold=tr.gold, n_pos=tr.n_pos, n_annotators=tr.n_annotators)
        seeds = list(cfg.seeds)
        tc = cfg.train
    models = model.train_replicas(tr.X, targets, tc, seeds)
    for run_seed, m in zip(cfg.seeds, models):
        model.save_checkpoint(m.params, mdir / f"seed_{run_seed}.json")
        data.write_confidences(mdir / f"confidences_seed_{run_seed}.csv", tr.ids, model.confidences(m, tr.X))


def cmd_sweep(args):
    cfg = _experiment_config(args, None, None)
    grid = None if args.grid in (None, "default") else parse_grid(args.grid)
    if not args.name and not args.config:
        cfg = replace(cfg, name=f"sweep-{args.method}")
    result = harness.sweep(args.method, grid, cfg, jobs=args.jobs)
    out = _out_dir(args, cfg)
    harness.emit_report(result, out)
    _print_summary(harness.load_report(out), args.json)
    return EXIT_OK


def cmd_report(args):
    _print_summary(harness.load_report(args.dir), args.json)
    return EXIT_OK


def cmd_selftest(args):
    ok = True
    for name, passed, detail in selftest.run():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothcal", description=__doc__.splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic multi-annotator dataset")
    p.add_argument("--config", help="generator configuration JSON; flags override it")
    _add_generator_flags(p)
    p.add_argument("--seed", dest="data_seed", type=int, help="generator seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("smooth", help="write soft targets for the training examples of a dataset")
    p.add_argument("--dataset", required=True, help="dataset directory or CSV file")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--param", type=float, help="alpha, omega or phi")
    p.add_argument("--confidences", help="id,confidence CSV (confidence methods)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("train", help="train one method over several seeds and write a report")
    p.add_argument("--method", default="hard", choices=METHODS)
    p.add_argument("--param", type=float)
    _add_train_flags(p)
    p.add_argument("--save-models", action="store_true",
                   help="also write per-seed checkpoints and training-set confidences")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="sweep a method's hyperparameter against the baseline")
    p.add_argument("--method", required=True, choices=[m for m in METHODS if m != "hard"])
    p.add_argument("--grid", help="comma-separated values, 'a,b,...,c', or 'default'")
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-render a stored report without retraining")
    p.add_argument("--dir", required=True, help="report directory containing summary.json")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="run the built-in numerical oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, InvalidInputError, MissingDataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
