"""
Multi-annotator binary datasets: a synthetic generator and a CSV format.

Generative model
----------------
For each example a true class ``z ~ Bernoulli(1/2)`` and a latent difficulty
``delta ~ Beta(a, b)`` are drawn.  Features are

    x = (1 - delta) * m * (2z - 1) * u + eps,   eps ~ N(0, sigma^2 I)

with a fixed unit direction ``u = (1, ..., 1) / sqrt(d)``.  Each of the N
annotators independently reports ``z`` with probability ``q = 1 - delta/2``
(and the other class otherwise), so easy examples get unanimous votes and
the hardest ones get coin flips.  The gold label is the majority vote.

File layout
-----------
A dataset directory holds ``train.csv``, ``test.csv`` and ``metadata.json``.
Each CSV has the header ``id,gold,n_pos,n_annotators,f0,...,f{d-1}`` and
may carry an extra ``latent_difficulty`` column.  Features are written with
12 significant digits; generated features are rounded to that precision at
creation so a save/load round trip is exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np

from .errors import ConfigurationError, InvalidInputError, ParseError

FEATURE_DIGITS = 12
SPLITS = ("train", "test")


def majority_label(n_pos, N, tie_break: bool = False):
    """Majority vote, 1 when ``n_pos > N/2``.

    An even N admits ties and is rejected unless ``tie_break`` is set, in
    which case a tie goes to the positive class.
    """
    scalar = np.ndim(n_pos) == 0 and np.ndim(N) == 0
    n_pos = np.asarray(n_pos, dtype=np.int64)
    N = np.asarray(N, dtype=np.int64)
    if np.any(N < 1) or np.any((n_pos < 0) | (n_pos > N)):
        raise InvalidInputError("vote counts must satisfy 0 <= n_pos <= N, N >= 1")
    even = N % 2 == 0
    if np.any(even) and not tie_break:
        raise ConfigurationError("an even number of annotators allows ties; pass tie_break=True")
    out = np.where(2 * n_pos > N, 1, np.where((2 * n_pos == N) & even, 1, 0))
    return int(out) if scalar else out.astype(np.int64)


def _round_sig(x, digits=FEATURE_DIGITS):
    # go through the decimal string so that reading the file back is exact
    flat = np.asarray(x, dtype=np.float64).ravel()
    out = np.array([float(f"{v:.{digits}g}") for v in flat.tolist()])
    return out.reshape(np.shape(x))


@dataclass(frozen=True)
class AnnotatedExample:
    id: str
    features: np.ndarray
    n_pos: Optional[int]
    n_annotators: Optional[int]
    gold: int
    latent_difficulty: Optional[float] = None

    def __eq__(self, other):
        if not isinstance(other, AnnotatedExample):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.features, other.features)
            and self.n_pos == other.n_pos
            and self.n_annotators == other.n_annotators
            and self.gold == other.gold
            and self.latent_difficulty == other.latent_difficulty
        )

    __hash__ = None


@dataclass(eq=False)
class Split:
    """Column-oriented storage for one split.

    ``n_pos`` and ``n_annotators`` are None for single-annotator data, and
    ``difficulty`` is None unless the data was generated synthetically.
    """

    ids: List[str]
    X: np.ndarray
    gold: np.ndarray
    n_pos: Optional[np.ndarray] = None
    n_annotators: Optional[np.ndarray] = None
    difficulty: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise InvalidInputError("features must form a 2-D array")
        n = self.X.shape[0]
        self.gold = np.asarray(self.gold, dtype=np.int64)
        if len(self.ids) != n or self.gold.shape != (n,):
            raise InvalidInputError("ids, features and gold labels must have matching lengths")
        if len(set(self.ids)) != n:
            raise InvalidInputError("example ids must be unique")
        if (self.n_pos is None) != (self.n_annotators is None):
            raise InvalidInputError("n_pos and n_annotators must be given together")
        if self.n_pos is not None:
            self.n_pos = np.asarray(self.n_pos, dtype=np.int64)
            self.n_annotators = np.asarray(self.n_annotators, dtype=np.int64)
        if self.difficulty is not None:
            self.difficulty = np.asarray(self.difficulty, dtype=np.float64)

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i) -> AnnotatedExample:
        return AnnotatedExample(
            id=self.ids[i],
            features=self.X[i].copy(),
            n_pos=None if self.n_pos is None else int(self.n_pos[i]),
            n_annotators=None if self.n_annotators is None else int(self.n_annotators[i]),
            gold=int(self.gold[i]),
            latent_difficulty=None if self.difficulty is None else float(self.difficulty[i]),
        )

    def __iter__(self) -> Iterator[AnnotatedExample]:
        return (self[i] for i in range(len(self)))

    @property
    def has_votes(self) -> bool:
        return self.n_pos is not None

    @classmethod
    def from_examples(cls, examples, d=None):
        examples = list(examples)
        if not examples:
            X = np.zeros((0, d or 0))
            return cls([], X, np.zeros(0, dtype=np.int64))
        votes = [e.n_pos is not None for e in examples]
        if any(votes) and not all(votes):
            raise InvalidInputError("either every example carries votes or none does")
        diff = [e.latent_difficulty is not None for e in examples]
        return cls(
            ids=[e.id for e in examples],
            X=np.stack([np.asarray(e.features, dtype=np.float64) for e in examples]),
            gold=[e.gold for e in examples],
            n_pos=[e.n_pos for e in examples] if all(votes) else None,
            n_annotators=[e.n_annotators for e in examples] if all(votes) else None,
            difficulty=[e.latent_difficulty for e in examples] if all(diff) else None,
        )

    def equals(self, other: "Split") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (
            self.ids == other.ids
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.gold, other.gold)
            and same(self.n_pos, other.n_pos)
            and same(self.n_annotators, other.n_annotators)
            and same(self.difficulty, other.difficulty)
        )


@dataclass(eq=False)
class Dataset:
    train: Split
    test: Split
    metadata: Optional[dict] = None

    def __post_init__(self):
        d = {s.X.shape[1] for s in (self.train, self.test) if len(s)}
        if len(d) > 1:
            raise InvalidInputError("train and test feature dimensions differ")
        Ns = set()
        for s in (self.train, self.test):
            if s.n_annotators is not None and len(s):
                Ns.update(np.unique(s.n_annotators).tolist())
        if len(Ns) > 1:
            raise InvalidInputError(f"annotator count must be uniform, found {sorted(Ns)}")
        overlap = set(self.train.ids) & set(self.test.ids)
        if overlap:
            raise InvalidInputError(f"train and test ids overlap, e.g. {sorted(overlap)[0]!r}")

    @property
    def d(self) -> int:
        return self.train.X.shape[1]

    @property
    def N(self) -> Optional[int]:
        if self.train.n_annotators is None or not len(self.train):
            return None
        return int(self.train.n_annotators[0])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.train.equals(other.train) and self.test.equals(other.test)

    __hash__ = None

    def fingerprint(self) -> str:
        """Stable content hash, used to key caches and report provenance."""
        import hashlib

        h = hashlib.sha256()
        for s in (self.train, self.test):
            h.update("\x00".join(s.ids).encode())
            h.update(np.ascontiguousarray(s.X).tobytes())
            h.update(s.gold.tobytes())
            if s.n_pos is not None:
                h.update(s.n_pos.tobytes())
                h.update(s.n_annotators.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class GeneratorConfig:
    n_train: int = 2000
    n_test: int = 1000
    d: int = 20
    n_annotators: int = 7
    difficulty_a: float = 2.0
    difficulty_b: float = 5.0
    class_mean: float = 2.0
    noise: float = 1.0
    seed: int = 0
    tie_break: bool = False

    def __post_init__(self):
        for name in ("n_train", "n_test", "d", "n_annotators"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        for name in ("difficulty_a", "difficulty_b", "class_mean", "noise"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be positive, got {v!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.n_annotators % 2 == 0 and not self.tie_break:
            raise ConfigurationError(
                f"n_annotators={self.n_annotators} is even; majority ties need tie_break=True"
            )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown generator fields: {sorted(unknown)}")
        return cls(**d)


def _draw(rng, n, cfg: GeneratorConfig, u):
    z = rng.integers(0, 2, size=n)
    delta = rng.beta(cfg.difficulty_a, cfg.difficulty_b, size=n)
    eps = rng.normal(0.0, cfg.noise, size=(n, cfg.d))
    sign = 2.0 * z - 1.0
    X = ((1.0 - delta) * cfg.class_mean * sign)[:, None] * u[None, :] + eps
    return X, draw_votes(rng, z, delta, cfg.n_annotators), delta


def draw_votes(rng, z, delta, N: int):
    """Positive-vote counts from N annotators who each report ``z`` with probability ``1 - delta/2``."""
    z = np.asarray(z)
    q = 1.0 - np.asarray(delta, dtype=np.float64) / 2.0
    agrees = rng.random((z.size, N)) < q[:, None]
    n_agree = agrees.sum(axis=1)
    return np.where(z == 1, n_agree, N - n_agree)


def generate(config: GeneratorConfig = GeneratorConfig()) -> Dataset:
    """Draw a synthetic dataset; identical configs give identical datasets."""
    ss = np.random.SeedSequence(config.seed)
    u = np.ones(config.d) / math.sqrt(config.d)
    splits = {}
    for name, n, child in zip(SPLITS, (config.n_train, config.n_test), ss.spawn(2)):
        rng = np.random.default_rng(child)
        X, n_pos, delta = _draw(rng, n, config, u)
        N = np.full(n, config.n_annotators)
        splits[name] = Split(
            ids=[f"{name}-{i:06d}" for i in range(n)],
            X=_round_sig(X),
            gold=majority_label(n_pos, N, tie_break=config.tie_break),
            n_pos=n_pos,
            n_annotators=N,
            difficulty=_round_sig(delta),
        )
    meta = {
        "d": config.d,
        "N": config.n_annotators,
        "n_train": config.n_train,
        "n_test": config.n_test,
        "seed": config.seed,
        "generator": config.to_dict(),
    }
    return Dataset(splits["train"], splits["test"], metadata=meta)


def unanimity_fraction(split: Split) -> float:
    """Fraction of examples whose annotators all agree."""
    if not split.has_votes:
        raise InvalidInputError("split has no vote data")
    return float(np.mean((split.n_pos == 0) | (split.n_pos == split.n_annotators)))


# -- CSV ---------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.{FEATURE_DIGITS}g}"


def write_split(split: Split, path) -> None:
    d = split.X.shape[1]
    header = ["id", "gold", "n_pos", "n_annotators"] + [f"f{j}" for j in range(d)]
    if split.difficulty is not None:
        header.append("latent_difficulty")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(split)):
            row = [
                split.ids[i],
                int(split.gold[i]),
                "" if split.n_pos is None else int(split.n_pos[i]),
                "" if split.n_annotators is None else int(split.n_annotators[i]),
            ]
            row += [_fmt(v) for v in split.X[i].tolist()]
            if split.difficulty is not None:
                row.append(_fmt(split.difficulty[i]))
            w.writerow(row)


def _parse_int(text, row, col):
    try:
        v = int(text)
    except ValueError:
        raise ParseError(f"expected an integer, got {text!r}", row=row, column=col) from None
    return v


def _parse_float(text, row, col):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"expected a number, got {text!r}", row=row, column=col) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", row=row, column=col)
    return v


def read_split(path, tie_break: bool = False, allow_empty: bool = False) -> Split:
    """Parse one dataset CSV.

    Row numbers in errors count the header as row 1.  Vote columns may be
    left blank for single-annotator data, in which case ``gold`` is taken
    as given; otherwise ``gold`` must equal the majority vote.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty") from None
        required = ["id", "gold", "n_pos", "n_annotators"]
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        feat_cols = sorted(
            (c for c in header if c.startswith("f") and c[1:].isdigit()), key=lambda c: int(c[1:])
        )
        if not feat_cols or [int(c[1:]) for c in feat_cols] != list(range(len(feat_cols))):
            raise ParseError(f"{path}: feature columns must be f0..f{{d-1}}")
        pos = {c: header.index(c) for c in header}
        has_diff = "latent_difficulty" in pos

        ids, X, gold, n_pos, n_ann, diff = [], [], [], [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=rownum)
            ids.append(row[pos["id"]])
            g = _parse_int(row[pos["gold"]], rownum, "gold")
            if g not in (0, 1):
                raise ParseError(f"gold must be 0 or 1, got {g}", row=rownum, column="gold")
            gold.append(g)
            np_text, N_text = row[pos["n_pos"]], row[pos["n_annotators"]]
            if np_text == "" and N_text == "":
                n_pos.append(None)
                n_ann.append(None)
            else:
                k = _parse_int(np_text, rownum, "n_pos")
                N = _parse_int(N_text, rownum, "n_annotators")
                if N < 1:
                    raise ParseError(f"n_annotators must be >= 1, got {N}", row=rownum, column="n_annotators")
                if not 0 <= k <= N:
                    raise ParseError(f"n_pos={k} outside 0..{N}", row=rownum, column="n_pos")
                try:
                    maj = majority_label(k, N, tie_break=tie_break)
                except ConfigurationError as exc:
                    raise ParseError(str(exc), row=rownum, column="n_annotators") from None
                if maj != g:
                    raise ParseError(
                        f"gold={g} disagrees with majority vote {k}/{N}", row=rownum, column="gold"
                    )
                n_pos.append(k)
                n_ann.append(N)
            X.append([_parse_float(row[pos[c]], rownum, c) for c in feat_cols])
            if has_diff:
                t = row[pos["latent_difficulty"]]
                diff.append(None if t == "" else _parse_float(t, rownum, "latent_difficulty"))

    if not ids:
        if allow_empty:
            return Split([], np.zeros((0, len(feat_cols))), np.zeros(0, dtype=np.int64))
        raise ParseError(f"{path}: dataset has no rows")
    with_votes = [v is not None for v in n_pos]
    if any(with_votes) and not all(with_votes):
        first = with_votes.index(False) + 2
        raise ParseError("vote counts missing on some rows but not others", row=first, column="n_pos")
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate example ids")
    return Split(
        ids=ids,
        X=np.array(X, dtype=np.float64),
        gold=gold,
        n_pos=n_pos if all(with_votes) else None,
        n_annotators=n_ann if all(with_votes) else None,
        difficulty=diff if has_diff and all(v is not None for v in diff) else None,
    )


def save(dataset: Dataset, path) -> None:
    """Write ``train.csv``, ``test.csv`` and ``metadata.json`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_split(dataset.train, path / "train.csv")
    write_split(dataset.test, path / "test.csv")
    meta = dict(dataset.metadata or {})
    meta.update({
        "d": dataset.d,
        "N": dataset.N,
        "n_train": len(dataset.train),
        "n_test": len(dataset.test),
    })
    with open(path / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(path, tie_break: Optional[bool] = None) -> Dataset:
    """Read a dataset directory written by :func:`save`.

    A single CSV file is also accepted; it becomes the training split and
    the test split is left empty.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no dataset at {path}")
    meta = None
    if path.is_dir():
        meta_path = path / "metadata.json"
        if meta_path.exists():
            with open(meta_path, encoding="utf-8") as fh:
                meta = json.load(fh)
        if tie_break is None:
            tie_break = bool(((meta or {}).get("generator") or {}).get("tie_break", False))
        train = read_split(path / "train.csv", tie_break=tie_break)
        test_path = path / "test.csv"
        test = (
            read_split(test_path, tie_break=tie_break, allow_empty=True)
            if test_path.exists()
            else Split([], np.zeros((0, train.X.shape[1])), np.zeros(0, dtype=np.int64))
        )
    else:
        train = read_split(path, tie_break=bool(tie_break))
        test = Split([], np.zeros((0, train.X.shape[1])), np.zeros(0, dtype=np.int64))
    return Dataset(train, test, metadata=meta)


def write_column(path, ids, values, name) -> None:
    """Write an ``id,<name>`` CSV with values at 12 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", name])
        for i, v in zip(ids, np.asarray(values, dtype=np.float64).tolist()):
            w.writerow([i, _fmt(v)])


def read_column(path, name) -> dict:
    """Read an ``id,<name>`` CSV into a dict keyed by id."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty") from None
        if header[:2] != ["id", name]:
            raise ParseError(f"{path}: expected header 'id,{name}', got {','.join(header)!r}")
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise ParseError("expected 2 fields", row=rownum)
            out[row[0]] = _parse_float(row[1], rownum, name)
    return out


def write_targets(path, ids, targets) -> None:
    write_column(path, ids, targets, "target")


def read_confidences(path) -> dict:
    return read_column(path, "confidence")


def write_confidences(path, ids, confidences) -> None:
    write_column(path, ids, confidences, "confidence")
