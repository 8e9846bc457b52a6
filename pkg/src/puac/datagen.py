"""Synthetic three-bag data, CSV ingestion, and the resampling transforms used by
the robustness experiments.

CSV format: a header row, feature columns ``x0 .. x{d-1}`` (decimal floats),
a ``source`` column with values ``pos``, ``unl``, ``aug`` or ``test`` and an
optional ``label`` column with values ``p``, ``n``, ``a``. Test rows must be
labeled; labels on training rows are kept only as latent oracle labels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyClass, ParseError, StructuralViolation, UnknownSourceTag
from .types import (
    AggregatedPriors,
    Bag,
    ClassLabel,
    LabeledSet,
    PriorMatrix,
    PuacDataset,
    SourceBag,
    aggregate_priors,
    make_rng,
    validate_priors,
)


@dataclass(frozen=True)
class GaussianClassSpec:
    """Diagonal Gaussian class-conditional densities, one row per class (P, N, A)."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.asarray(self.variances, dtype=np.float64)
        var = np.broadcast_to(var if var.ndim == 2 else var.reshape(-1, 1), mu.shape).copy()
        if mu.shape[0] != 3:
            raise DimensionMismatch("need one mean vector per class (3 rows)")
        if np.any(var <= 0) or not np.all(np.isfinite(var)):
            raise ValueError("class variances must be strictly positive")
        mu.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, codes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One draw from the class-conditional of each label code (1/2/3)."""
        idx = np.asarray(codes, dtype=np.int64) - 1
        z = rng.standard_normal((idx.size, self.dim))
        return self.means[idx] + z * np.sqrt(self.variances[idx])

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """``log N(x; mu_c, diag(var_c))`` for every sample and class, shape (n, 3)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        diff = x[:, None, :] - self.means[None, :, :]
        quad = (diff**2 / self.variances[None]).sum(axis=2)
        log_norm = np.log(2 * np.pi * self.variances).sum(axis=1)
        return -0.5 * (quad + log_norm[None, :])

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "variances": self.variances.tolist()}


@dataclass(frozen=True)
class GenConfig:
    spec: GaussianClassSpec
    theta: PriorMatrix
    n_p: int
    n_u: int
    n_a: int
    n_test: int = 0
    test_priors: AggregatedPriors | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.n_p, self.n_u, self.n_a) < 1 or self.n_test < 0:
            raise ValueError("bag counts must be >= 1 and n_test >= 0")

    @property
    def pooled_priors(self) -> AggregatedPriors:
        return aggregate_priors(self.theta, self.n_p, self.n_u, self.n_a)

    @property
    def resolved_test_priors(self) -> AggregatedPriors:
        return self.test_priors if self.test_priors is not None else self.pooled_priors


STANDARD_MEANS = ((0.0, 0.0), (3.0, 0.0), (0.0, 3.0))
STANDARD_THETA = ((1.0, 0.0, 0.0), (0.5, 0.5, 0.0), (0.2, 0.3, 0.5))


def standard_spec() -> GaussianClassSpec:
    return GaussianClassSpec(np.array(STANDARD_MEANS), np.ones((3, 2)))


def standard_benchmark(n_bag: int = 2000, n_test: int = 6000, seed: int = 0, theta=STANDARD_THETA) -> GenConfig:
    """The pinned synthetic benchmark: 2-D unit-variance classes at (0,0), (3,0), (0,3).

    Test data follow the pooled class priors of the training bags.
    """
    return GenConfig(standard_spec(), validate_priors(theta), n_bag, n_bag, n_bag, n_test, None, seed)


def _draw_bag(spec, row, n, rng, source):
    codes = rng.choice(3, size=n, p=np.asarray(row)) + 1
    return Bag(spec.sample(codes, rng), source, codes)


def sample_puac(cfg: GenConfig) -> PuacDataset:
    """Draw the three bags (and the test set) from the mixtures defined by ``cfg.theta``.

    Every sample keeps its latent class code. Each bag uses its own random
    stream derived from ``cfg.seed``, so changing one bag size does not
    perturb the others.
    """
    spec, theta = cfg.spec, cfg.theta
    bags = [
        _draw_bag(spec, theta.row(src), n, make_rng(cfg.seed, "datagen", src.value), src)
        for src, n in zip((SourceBag.POS, SourceBag.UNL, SourceBag.AUG), (cfg.n_p, cfg.n_u, cfg.n_a))
    ]
    test = None
    if cfg.n_test > 0:
        rng = make_rng(cfg.seed, "datagen", "test")
        codes = rng.choice(3, size=cfg.n_test, p=cfg.resolved_test_priors.array) + 1
        test = LabeledSet(spec.sample(codes, rng), codes)
    return PuacDataset(*bags, test=test)


def sample_labeled(spec: GaussianClassSpec, priors: AggregatedPriors, n: int, rng: np.random.Generator) -> LabeledSet:
    """``n`` fully labeled draws from the class mixture with weights ``priors``."""
    codes = rng.choice(3, size=n, p=priors.array) + 1
    return LabeledSet(spec.sample(codes, rng), codes)


_SOURCES = {"pos": SourceBag.POS, "unl": SourceBag.UNL, "aug": SourceBag.AUG, "test": None}


@dataclass(frozen=True)
class CsvSchema:
    """Column names for :func:`load_csv`. ``features=None`` means all ``x<i>`` columns."""

    features: Sequence[str] | None = None
    source: str = "source"
    label: str = "label"


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> PuacDataset:
    """Read a dataset from CSV.

    Raises
    ------
    ParseError
        On a malformed row; carries the 1-based file line number.
    DimensionMismatch
        When a row holds a different number of feature values than the header.
    UnknownSourceTag
        For a ``source`` value outside ``pos/unl/aug/test``.
    """
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("file is empty", row=1) from None
        if schema.features is None:
            feats = [h for h in header if h.startswith("x") and h[1:].isdigit()]
            feats.sort(key=lambda h: int(h[1:]))
        else:
            feats = list(schema.features)
        missing = [c for c in [*feats, schema.source] if c not in header]
        if missing:
            raise ParseError(f"missing required columns {missing}", row=1)
        if not feats:
            raise ParseError("no feature columns", row=1)
        f_idx = [header.index(c) for c in feats]
        s_idx = header.index(schema.source)
        l_idx = header.index(schema.label) if schema.label in header else None

        xs: dict[str, list] = {k: [] for k in _SOURCES}
        ys: dict[str, list] = {k: [] for k in _SOURCES}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DimensionMismatch(
                    f"line {line_no}: expected {len(header)} fields ({len(feats)} features), got {len(row)}"
                )
            cells = [row[i].strip() for i in f_idx]
            if any(c == "" for c in cells):
                raise DimensionMismatch(f"line {line_no}: missing feature values")
            try:
                x = [float(c) for c in cells]
            except ValueError as exc:
                raise ParseError(str(exc), row=line_no) from None
            tag = row[s_idx].strip().lower()
            if tag not in _SOURCES:
                raise UnknownSourceTag(f"unknown source tag {tag!r}", row=line_no, column=schema.source)
            lab = row[l_idx].strip().lower() if l_idx is not None else ""
            if lab:
                if lab not in ("p", "n", "a"):
                    raise ParseError(f"unknown label {lab!r}", row=line_no, column=schema.label)
                code = int(ClassLabel.from_tag(lab))
            elif tag == "test":
                raise ParseError("test rows need a label", row=line_no, column=schema.label)
            else:
                code = None
            xs[tag].append(x)
            ys[tag].append(code)

    d = len(feats)

    def as_bag(tag):
        x = np.array(xs[tag], dtype=np.float64).reshape(-1, d)
        labels = ys[tag]
        if labels and all(v is not None for v in labels):
            lab = np.array(labels, dtype=np.int64)
        elif any(v is not None for v in labels):
            raise ParseError(f"{tag} rows are only partly labeled", column=schema.label)
        else:
            lab = None
        return x, lab

    bags = []
    for tag in ("pos", "unl", "aug"):
        x, lab = as_bag(tag)
        bags.append(Bag(x, _SOURCES[tag], lab))
    test = None
    if xs["test"]:
        x, lab = as_bag("test")
        test = LabeledSet(x, lab)
    return PuacDataset(*bags, test=test)


def save_csv(data: PuacDataset, path: str | Path) -> None:
    """Write a dataset in the format read by :func:`load_csv` (floats at full precision)."""
    d = data.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(d)] + ["source", "label"])
        for bag in data.bags:
            for i in range(len(bag)):
                lab = ClassLabel(int(bag.labels[i])).tag if bag.labels is not None else ""
                w.writerow([repr(float(v)) for v in bag.x[i]] + [bag.source.value, lab])
        if data.test is not None:
            for i in range(len(data.test)):
                w.writerow([repr(float(v)) for v in data.test.x[i]] + ["test", ClassLabel(int(data.test.y[i])).tag])


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    raw = weights * total
    counts = np.floor(raw).astype(np.int64)
    short = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def shift_test(test: LabeledSet, eta: Sequence[float], seed: int, pi: AggregatedPriors | None = None) -> LabeledSet:
    """Resample a labeled set so its class frequencies become ``eta * pi`` renormalized.

    ``pi`` defaults to the empirical class frequency of ``test``; passing the
    generating priors instead makes the target independent of sampling noise.
    The total size is kept; per-class target counts use largest-remainder
    rounding, and rows are drawn with replacement within each class.

    Raises
    ------
    EmptyClass
        When a class with positive target mass has no rows to resample.
    """
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (3,) or np.any(~np.isfinite(eta)) or np.any(eta <= 0):
        raise ValueError(f"shift multipliers must be three positive numbers, got {eta.tolist()}")
    counts = test.class_counts()
    total = int(counts.sum())
    base = counts / total if pi is None else pi.array
    target_pi = eta * base
    target_pi = target_pi / target_pi.sum()
    target = _largest_remainder(target_pi, total)
    rng = make_rng(seed, "datagen", "shift")
    xs, ys = [], []
    for c in range(3):
        if target[c] == 0:
            continue
        idx = np.flatnonzero(test.y == c + 1)
        if idx.size == 0:
            raise EmptyClass(f"class {'pna'[c]} has no rows to resample")
        pick = idx[rng.integers(0, idx.size, size=target[c])]
        xs.append(test.x[pick])
        ys.append(test.y[pick])
    return LabeledSet(np.concatenate(xs), np.concatenate(ys))


def perturb_priors(theta, eta_u_p: float, eta_a_p: float, eta_a_n: float) -> PriorMatrix:
    """Scale the three free priors and restore the row-sum constraints.

    ``theta_u^n := 1 - eta_u_p * theta_u^p`` and
    ``theta_a^a := 1 - eta_a_p * theta_a^p - eta_a_n * theta_a^n``.
    """
    for name, e in (("eta_u_p", eta_u_p), ("eta_a_p", eta_a_p), ("eta_a_n", eta_a_n)):
        if not (math.isfinite(e) and e > 0):
            raise ValueError(f"{name} must be positive, got {e}")
    rows = theta.rows if isinstance(theta, PriorMatrix) else np.asarray(theta, dtype=np.float64).tolist()
    u_p = eta_u_p * rows[1][0]
    a_p = eta_a_p * rows[2][0]
    a_n = eta_a_n * rows[2][1]
    if u_p > 1.0:
        raise StructuralViolation(f"perturbed theta[unl][p] = {u_p} exceeds 1")
    a_a = 1.0 - a_p - a_n
    if a_a < -1e-12:
        raise StructuralViolation(f"perturbed theta[aug] leaves theta[aug][a] = {a_a} < 0")
    return validate_priors(
        [[1.0, 0.0, 0.0], [u_p, 1.0 - u_p, 0.0], [a_p, a_n, max(a_a, 0.0)]], allow_degenerate=True
    )
