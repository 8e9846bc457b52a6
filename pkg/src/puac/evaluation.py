"""Metrics, the Bayes oracle for Gaussian class-conditionals, and experiment grids.

Report layout
-------------
One CSV row per (method, cell, seed) with columns, in this order::

    method, <grid parameter columns>, seed,
    overall_acc, acc_p, acc_n, acc_a, ident_a, train_risk_final, error

Grid parameter columns depend on the grid kind:

==========  ===============================
kind        parameter columns
==========  ===============================
plain       (none)
perturb     eta_u_p, eta_a_p, eta_a_n
shift       eta_p, eta_n, eta_a
size        n_bag
==========  ===============================

``error`` is empty for successful cells and holds ``"<ExceptionType>: message"``
otherwise (metrics are then NaN). The JSON summary lists, per (method, cell),
the number of successful repetitions and the mean and sample standard
deviation of each metric.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .baselines import BinaryPuConfig, merged_positive_prior, predict_binary, train_binary_baseline
from .datagen import GaussianClassSpec, GenConfig, perturb_priors, sample_labeled, sample_puac, shift_test, standard_benchmark
from .errors import EmptySampleSet, MissingClass
from .models import Scorer, predict
from .training import train
from .types import AggregatedPriors, ClassLabel, LabeledSet, PriorMatrix, PuacDataset, RunConfig, make_rng

METRIC_COLUMNS = ("overall_acc", "acc_p", "acc_n", "acc_a", "ident_a", "train_risk_final")
GRID_PARAMS = {
    "plain": (),
    "perturb": ("eta_u_p", "eta_a_p", "eta_a_n"),
    "shift": ("eta_p", "eta_n", "eta_a"),
    "size": ("n_bag",),
}
METHODS = ("upuac", "upu", "nnpu")

# Multiplier triples of the two published robustness tables.
TABLE3_UNIFORM = tuple((e, e, e) for e in (0.8, 0.9, 1.0, 1.1, 1.2))
TABLE3_MIXED = ((0.8, 1.0, 1.2), (0.9, 1.0, 1.1), (1.0, 0.8, 1.2), (1.0, 1.1, 0.9), (1.2, 0.8, 1.0))
TABLE4_FIRST = ((0.8, 1.0, 1.2), (0.9, 1.0, 1.1), (1.0, 1.0, 1.0), (1.2, 1.0, 0.8), (1.1, 1.0, 0.9))
TABLE4_SECOND = ((0.8, 1.1, 1.2), (0.9, 1.1, 1.1), (0.9, 0.8, 1.2), (0.9, 1.2, 0.9), (1.2, 1.2, 0.9))


@dataclass(frozen=True)
class Metrics:
    """Accuracy summary of three-way predictions.

    ``confusion[i][j]`` counts test samples of class ``i`` predicted as ``j``
    (order P, N, A). Per-class accuracy is NaN for a class with no samples.
    """

    confusion: tuple[tuple[int, int, int], ...]

    @classmethod
    def from_predictions(cls, pred, y) -> "Metrics":
        pred = np.asarray(pred, dtype=np.int64).ravel()
        y = np.asarray(y, dtype=np.int64).ravel()
        if pred.shape != y.shape:
            raise ValueError(f"{pred.size} predictions for {y.size} labels")
        if y.size == 0:
            raise EmptySampleSet("no test samples")
        cm = np.zeros((3, 3), dtype=np.int64)
        np.add.at(cm, (y - 1, pred - 1), 1)
        return cls(tuple(tuple(int(v) for v in row) for row in cm))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.confusion, dtype=np.int64)

    @property
    def counts(self) -> tuple[int, int, int]:
        return tuple(int(v) for v in self.matrix.sum(axis=1))

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    @property
    def overall(self) -> float:
        return float(np.trace(self.matrix) / self.total)

    def class_accuracy(self, label: ClassLabel | int) -> float:
        i = ClassLabel(int(label)).index
        n = self.counts[i]
        return self.confusion[i][i] / n if n else math.nan

    @property
    def acc_p(self) -> float:
        return self.class_accuracy(ClassLabel.P)

    @property
    def acc_n(self) -> float:
        return self.class_accuracy(ClassLabel.N)

    @property
    def acc_a(self) -> float:
        return self.class_accuracy(ClassLabel.A)

    @property
    def ident_a(self) -> float:
        """Share of augmented-class test samples recognized as augmented."""
        return self.acc_a

    def to_dict(self) -> dict:
        return {
            "overall_acc": self.overall,
            "acc_p": self.acc_p,
            "acc_n": self.acc_n,
            "acc_a": self.acc_a,
            "ident_a": self.ident_a,
            "confusion": [list(r) for r in self.confusion],
            "counts": list(self.counts),
        }


def _require_all_classes(test: LabeledSet) -> None:
    if len(test) == 0:
        raise EmptySampleSet("test set is empty")
    counts = test.class_counts()
    for c in range(3):
        if counts[c] == 0:
            raise MissingClass(f"test set has no samples of class {'pna'[c]}")


def evaluate(model: Scorer, test: LabeledSet, loss_kind: str | None = None) -> Metrics:
    """Metrics of a trained scorer on a labeled test set with all three classes present.

    ``loss_kind`` is optional and only checked against the scorer's output width.
    """
    _require_all_classes(test)
    if loss_kind is not None:
        expected = 3 if loss_kind == "ovr" else 1
        if model.output_dim != expected:
            raise ValueError(f"{loss_kind} scorer should have {expected} outputs, got {model.output_dim}")
    return Metrics.from_predictions(predict(model, test.x), test.y)


def bayes_predict(spec: GaussianClassSpec, pi: AggregatedPriors, x):
    """Posterior argmax ``argmax_c pi_c N(x; mu_c, var_c)``; ties go to P, then N, then A."""
    single = np.ndim(x) == 1
    with np.errstate(divide="ignore"):
        log_post = spec.log_density(x) + np.log(pi.array)[None, :]
    codes = np.argmax(log_post, axis=1).astype(np.int64) + 1
    return ClassLabel(int(codes[0])) if single else codes


def bayes_accuracy(spec: GaussianClassSpec, pi: AggregatedPriors, n: int, seed: int = 0, chunk: int = 200_000):
    """Monte Carlo accuracy of the Bayes rule on ``n`` fresh draws.

    Returns
    -------
    accuracy : float
    stderr : float
        Binomial standard error ``sqrt(acc (1 - acc) / n)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, "eval", "bayes")
    hits = 0
    left = n
    while left > 0:
        m = min(chunk, left)
        sample = sample_labeled(spec, pi, m, rng)
        hits += int(np.sum(bayes_predict(spec, pi, sample.x) == sample.y))
        left -= m
    acc = hits / n
    return acc, math.sqrt(acc * (1 - acc) / n)


# --------------------------------------------------------------------------
# experiment grids


@dataclass(frozen=True)
class ExperimentGrid:
    """A sweep over one kind of cell, repeated for every seed.

    Parameters
    ----------
    kind : {"plain", "perturb", "shift", "size"}
        ``perturb`` cells scale the free training priors, ``shift`` cells
        resample the test set of a model trained once per seed, ``size``
        cells set the per-bag sample count.
    cells : sequence of tuples
        Parameter values per cell, matching :data:`GRID_PARAMS`.
    seeds : sequence of int
        One repetition per seed; must be distinct.
    methods : sequence of str
        Any of ``"upuac"``, ``"upu"``, ``"nnpu"``.
    priors : {"true", "estimated"}
        Source of the training priors for the three-bag learner.
    """

    kind: str = "plain"
    cells: tuple = ((),)
    seeds: tuple = (0,)
    methods: tuple = ("upuac",)
    priors: str = "true"

    def __post_init__(self):
        if self.kind not in GRID_PARAMS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        cells = tuple(tuple(c) if isinstance(c, (list, tuple)) else (c,) for c in self.cells)
        if not cells:
            raise ValueError("grid has no cells")
        width = len(GRID_PARAMS[self.kind])
        for c in cells:
            if len(c) != width:
                raise ValueError(f"{self.kind} cells need {width} values, got {c}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ValueError("grid needs at least one seed")
        if len(set(seeds)) != len(seeds):
            raise ValueError("grid seeds must be distinct")
        methods = tuple(self.methods)
        for m in methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.priors not in ("true", "estimated"):
            raise ValueError("priors must be 'true' or 'estimated'")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "methods", methods)

    @property
    def param_names(self) -> tuple[str, ...]:
        return GRID_PARAMS[self.kind]

    @property
    def columns(self) -> tuple[str, ...]:
        return ("method", *self.param_names, "seed", *METRIC_COLUMNS, "error")


@dataclass
class ExperimentReport:
    grid: ExperimentGrid
    rows: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.grid.columns)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in self.grid.columns])
        return buf.getvalue()

    def summary(self) -> list[dict]:
        """Per (method, cell): repetition count and mean/std of each metric."""
        out = []
        keys: list[tuple] = []
        groups: dict[tuple, list[dict]] = {}
        for row in self.rows:
            key = (row["method"], *(row[p] for p in self.grid.param_names))
            if key not in groups:
                keys.append(key)
                groups[key] = []
            groups[key].append(row)
        for key in keys:
            rows = groups[key]
            ok = [r for r in rows if not r["error"]]
            entry = {"method": key[0], "params": dict(zip(self.grid.param_names, key[1:]))}
            entry["n_ok"] = len(ok)
            entry["n_failed"] = len(rows) - len(ok)
            entry["mean"], entry["std"] = {}, {}
            for m in METRIC_COLUMNS:
                vals = np.array([r[m] for r in ok], dtype=np.float64)
                entry["mean"][m] = float(vals.mean()) if vals.size else math.nan
                entry["std"][m] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            out.append(entry)
        return out

    def summary_json(self) -> str:
        return json.dumps({"kind": self.grid.kind, "seeds": list(self.grid.seeds), "cells": self.summary()}, indent=1)

    def table_csv(self, metric: str = "overall_acc") -> str:
        """One row per method, one column per cell, entries ``mean±std`` in percent."""
        summ = self.summary()
        labels = [_cell_label(self.grid, c) for c in self.grid.cells]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", *labels])
        for method in self.grid.methods:
            entries = [e for e in summ if e["method"] == method]
            w.writerow([method, *(f"{100 * e['mean'][metric]:.2f}±{100 * e['std'][metric]:.2f}" for e in entries)])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _cell_label(grid: ExperimentGrid, cell: tuple) -> str:
    if not grid.param_names:
        return "all"
    return "/".join(f"{v:g}" if isinstance(v, float) else str(v) for v in cell)


def _training_theta(data: PuacDataset, gen: GenConfig, priors: str, seed: int) -> PriorMatrix:
    if priors == "true":
        return gen.theta
    from .prior_estimation import KernelConfig, estimate_puac_priors

    return estimate_puac_priors(data, KernelConfig(seed=seed))


def _fit_and_score(method: str, run: RunConfig, data: PuacDataset, theta: PriorMatrix, true_theta: PriorMatrix):
    """Train one method; returns a predictor callable and the final training risk."""
    if method == "upuac":
        report = train(run, data, theta)
        model = report.model
        fn = lambda x: predict(model, x)  # noqa: E731
    else:
        n_p, n_u, n_a = data.counts
        bcfg = BinaryPuConfig(method, merged_positive_prior(true_theta, n_u, n_a))
        report = train_binary_baseline(run, data, bcfg)
        model = report.model
        fn = lambda x: predict_binary(model, x)  # noqa: E731
    final = report.epoch_risk[-1] if report.epoch_risk else math.nan
    return fn, final


def _row(grid, method, cell, seed, metrics: Metrics | None, risk: float, error: str) -> dict:
    row = {"method": method, **dict(zip(grid.param_names, cell)), "seed": seed, "error": error}
    if metrics is None:
        row.update({m: math.nan for m in METRIC_COLUMNS})
    else:
        row.update(
            overall_acc=metrics.overall,
            acc_p=metrics.acc_p,
            acc_n=metrics.acc_n,
            acc_a=metrics.acc_a,
            ident_a=metrics.ident_a,
            train_risk_final=risk,
        )
    return row


def _err(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def _run_task(grid: ExperimentGrid, run: RunConfig, gen: GenConfig, method: str, cell_ids: tuple, seed: int) -> list:
    """Evaluate one (method, seed) over the given cells; returns ``(cell_index, row)`` pairs."""
    run = replace(run, seed=seed)
    out = []
    if grid.kind == "shift":
        try:
            data = sample_puac(replace(gen, seed=seed))
            theta = _training_theta(data, gen, grid.priors, seed)
            fn, risk = _fit_and_score(method, run, data, theta, gen.theta)
        except Exception as exc:  # recorded per cell, the sweep goes on
            return [(i, _row(grid, method, grid.cells[i], seed, None, math.nan, _err(exc))) for i in cell_ids]
        for i in cell_ids:
            cell = grid.cells[i]
            try:
                test = shift_test(data.test, cell, seed)
                _require_all_classes(test)
                m = Metrics.from_predictions(fn(test.x), test.y)
                out.append((i, _row(grid, method, cell, seed, m, risk, "")))
            except Exception as exc:
                out.append((i, _row(grid, method, cell, seed, None, math.nan, _err(exc))))
        return out
    for i in cell_ids:
        cell = grid.cells[i]
        try:
            g = gen
            if grid.kind == "size":
                n = int(cell[0])
                g = replace(gen, n_p=n, n_u=n, n_a=n)
            data = sample_puac(replace(g, seed=seed))
            theta = _training_theta(data, g, grid.priors, seed)
            if grid.kind == "perturb":
                theta = perturb_priors(theta, *cell)
            fn, risk = _fit_and_score(method, run, data, theta, g.theta)
            _require_all_classes(data.test)
            m = Metrics.from_predictions(fn(data.test.x), data.test.y)
            out.append((i, _row(grid, method, cell, seed, m, risk, "")))
        except Exception as exc:
            out.append((i, _row(grid, method, cell, seed, None, math.nan, _err(exc))))
    return out


def run_experiment(
    grid: ExperimentGrid,
    run: RunConfig | None = None,
    gen: GenConfig | None = None,
    jobs: int = 1,
) -> ExperimentReport:
    """Run every (method, cell, seed) of ``grid`` and collect a report.

    ``gen`` describes the synthetic data (default: the standard benchmark);
    its seed is replaced by each repetition's seed, which also seeds training.
    Shift cells share one trained model per (method, seed). Rows are ordered
    by method, then cell, then seed, independently of ``jobs``.
    """
    run = run or RunConfig()
    gen = gen or standard_benchmark()
    if gen.n_test < 1:
        raise ValueError("experiments need a test set (n_test >= 1)")
    all_cells = tuple(range(len(grid.cells)))
    tasks = []
    for method in grid.methods:
        for seed in grid.seeds:
            if grid.kind == "shift":
                tasks.append((method, all_cells, seed))
            else:
                tasks.extend((method, (i,), seed) for i in all_cells)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_task, grid, run, gen, *t) for t in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_run_task(grid, run, gen, *t) for t in tasks]
    keyed = {}
    for (method, _, seed), pairs in zip(tasks, results):
        for i, row in pairs:
            keyed[(grid.methods.index(method), i, grid.seeds.index(seed))] = row
    return ExperimentReport(grid, [keyed[k] for k in sorted(keyed)])


def perturbation_grid(triples: Sequence[Sequence[float]] = TABLE3_UNIFORM, seeds=(0, 1, 2), **kw) -> ExperimentGrid:
    return ExperimentGrid("perturb", tuple(tuple(t) for t in triples), tuple(seeds), **kw)


def shift_grid(triples: Sequence[Sequence[float]] = TABLE4_FIRST + TABLE4_SECOND, seeds=(0, 1, 2), **kw) -> ExperimentGrid:
    return ExperimentGrid("shift", tuple(tuple(t) for t in triples), tuple(seeds), **kw)
