"""Batch command line: ``puac <command> [options]``.

Commands
--------
gen              sample the synthetic benchmark into ``dataset.csv``
train            fit a three-bag scorer on a dataset CSV
estimate-priors  kernel mixture-proportion estimates of the training priors
eval             metrics of a checkpoint on the test rows of a dataset CSV
experiment       robustness / size sweeps producing report tables
baselines        binary PU baselines on a dataset CSV

Every command writes into a fresh run directory
``$PUAC_RUN_ROOT/<command>-<hash>-s<seed>`` (root defaults to ``./runs``),
where ``<hash>`` digests the resolved config, the command options and the
contents of the input files. ``--out`` overrides the directory. Each run
directory gets a ``manifest.json`` with the fully resolved config. Wall-clock
timings go to ``timing.json`` only, so every other artifact is byte-identical
across repeated invocations.

Config files are TOML with the optional tables ``[data]``, ``[train]``,
``[kernel]``, ``[mpe]`` and ``[grid]`` plus a top-level ``seed``; see
:data:`DEFAULTS` for every key and its default.

Exit status: 0 on success, 1 on a runtime error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BinaryPuConfig, merged_positive_prior, predict_binary, train_binary_baseline
from .datagen import STANDARD_MEANS, STANDARD_THETA, GaussianClassSpec, GenConfig, load_csv, sample_puac, save_csv
from .errors import PuacError
from .evaluation import ExperimentGrid, Metrics, bayes_accuracy, evaluate, run_experiment
from .models import load_scorer, save_scorer
from .prior_estimation import KernelConfig, MpeConfig, estimate_puac_priors_full
from .training import train
from .types import AggregatedPriors, RunConfig, validate_priors

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

RUN_ROOT_ENV = "PUAC_RUN_ROOT"

DEFAULTS = {
    "seed": 0,
    "data": {
        "means": [list(m) for m in STANDARD_MEANS],
        "variances": 1.0,
        "theta": [list(r) for r in STANDARD_THETA],
        "n_p": 2000,
        "n_u": 2000,
        "n_a": 2000,
        "n_test": 6000,
    },
    "train": {f.name: f.default for f in fields(RunConfig) if f.name != "seed"},
    "kernel": {"bandwidth": "median", "max_points": 1000},
    "mpe": {f.name: f.default for f in fields(MpeConfig)},
    "grid": {"kind": "plain", "cells": [[]], "seeds": [0], "methods": ["upuac"], "priors": "true"},
}


class UsageError(Exception):
    """Bad configuration or option combination (exit status 2)."""


# --------------------------------------------------------------------------
# configuration


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise UsageError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {where}{key!r} must be a table")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def load_config(path: str | None, seed: int | None = None) -> dict:
    """Defaults overlaid with the TOML file at ``path`` and an optional seed override."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, "rb") as fh:
                cfg = _merge(cfg, tomllib.load(fh))
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{path}: {exc}") from exc
        except FileNotFoundError as exc:
            raise UsageError(f"config file not found: {path}") from exc
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def _gen_config(cfg: dict) -> GenConfig:
    d = cfg["data"]
    means = np.asarray(d["means"], dtype=np.float64)
    var = np.asarray(d["variances"], dtype=np.float64)
    if var.ndim == 0:
        var = np.full(means.shape, float(var))
    spec = GaussianClassSpec(means, var)
    theta = validate_priors(d["theta"])
    return GenConfig(spec, theta, int(d["n_p"]), int(d["n_u"]), int(d["n_a"]), int(d["n_test"]), None, int(cfg["seed"]))


def _run_config(cfg: dict) -> RunConfig:
    try:
        return RunConfig(seed=int(cfg["seed"]), **cfg["train"])
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


def _kernel_config(cfg: dict) -> KernelConfig:
    k = cfg["kernel"]
    bw = k["bandwidth"] if k["bandwidth"] == "median" else float(k["bandwidth"])
    return KernelConfig(bw, int(k["max_points"]), int(cfg["seed"]))


def _mpe_config(cfg: dict) -> MpeConfig:
    return MpeConfig(**cfg["mpe"])


# --------------------------------------------------------------------------
# run directories


def _digest_file(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=str) + "\n"


def _run_dir(command: str, cfg: dict, options: dict, inputs: dict, out: str | None) -> Path:
    if out:
        path = Path(out)
    else:
        key = json.dumps({"command": command, "config": cfg, "options": options, "inputs": inputs}, sort_keys=True)
        digest = hashlib.sha256(key.encode("utf-8")).hexdigest()[:12]
        root = Path(os.environ.get(RUN_ROOT_ENV, "runs"))
        path = root / f"{command}-{digest}-s{cfg['seed']}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _start(command: str, args, cfg: dict, options: dict, input_paths: dict) -> Path:
    inputs = {}
    for name, p in input_paths.items():
        if p is None:
            continue
        if not Path(p).is_file():
            raise UsageError(f"--{name} file not found: {p}")
        inputs[name] = {"path": str(p), "sha256": _digest_file(p)}
    run_dir = _run_dir(command, cfg, options, inputs, args.out)
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "options": options,
        "inputs": inputs,
    }
    (run_dir / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
    return run_dir


def _write(run_dir: Path, name: str, text: str) -> None:
    (run_dir / name).write_text(text, encoding="utf-8")


def _theta_for(args, cfg: dict, data):
    """Training priors: the configured ground truth or kernel estimates."""
    if args.priors == "true":
        return validate_priors(cfg["data"]["theta"]), None
    est = estimate_puac_priors_full(data, _kernel_config(cfg), _mpe_config(cfg))
    return est.theta, est


# --------------------------------------------------------------------------
# commands


def cmd_gen(args, cfg):
    gen = _gen_config(cfg)
    run_dir = _start("gen", args, cfg, {}, {})
    data = sample_puac(gen)
    save_csv(data, run_dir / "dataset.csv")
    print(run_dir)


def cmd_train(args, cfg):
    run_cfg = _run_config(cfg)
    run_dir = _start("train", args, cfg, {"priors": args.priors}, {"data": args.data})
    data = load_csv(args.data)
    theta, est = _theta_for(args, cfg, data)
    if est is not None:
        _write(run_dir, "priors.json", est.to_json() + "\n")
    report = train(run_cfg, data, theta)
    save_scorer(report.model, run_dir / "model.json")
    _write(run_dir, "train_report.json", report.to_json(include_wall_clock=False) + "\n")
    _write(run_dir, "timing.json", _dump({"wall_clock_seconds": report.wall_clock}))
    print(run_dir)


def cmd_estimate(args, cfg):
    run_dir = _start("estimate-priors", args, cfg, {}, {"data": args.data})
    data = load_csv(args.data)
    est = estimate_puac_priors_full(data, _kernel_config(cfg), _mpe_config(cfg))
    _write(run_dir, "priors.json", est.to_json() + "\n")
    print(run_dir)


def _require_test(data, path):
    if data.test is None or len(data.test) == 0:
        raise PuacError(f"{path} has no labeled test rows")
    return data.test


def cmd_eval(args, cfg):
    run_dir = _start("eval", args, cfg, {"bayes": args.bayes}, {"model": args.model, "data": args.data})
    model = load_scorer(args.model)
    test = _require_test(load_csv(args.data), args.data)
    out = evaluate(model, test).to_dict()
    if args.bayes:
        gen = _gen_config(cfg)
        counts = test.class_counts()
        pi = AggregatedPriors.normalized(counts / counts.sum())
        acc, se = bayes_accuracy(gen.spec, pi, args.bayes, int(cfg["seed"]))
        out["bayes_accuracy"] = acc
        out["bayes_stderr"] = se
    _write(run_dir, "metrics.json", _dump(out))
    print(run_dir)


def cmd_experiment(args, cfg):
    g = cfg["grid"]
    try:
        grid = ExperimentGrid(g["kind"], tuple(tuple(c) for c in g["cells"]), tuple(g["seeds"]), tuple(g["methods"]), g["priors"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    run_cfg = _run_config(cfg)
    gen = _gen_config(cfg)
    run_dir = _start("experiment", args, cfg, {}, {})
    report = run_experiment(grid, run_cfg, gen, jobs=args.jobs)
    _write(run_dir, "report.csv", report.to_csv())
    _write(run_dir, "summary.json", report.summary_json() + "\n")
    _write(run_dir, "table.csv", report.table_csv())
    print(run_dir)
    return 1 if any(r["error"] for r in report.rows) else 0


def cmd_baselines(args, cfg):
    run_cfg = _run_config(cfg)
    methods = ("upu", "nnpu") if args.method == "both" else (args.method,)
    run_dir = _start("baselines", args, cfg, {"method": args.method}, {"data": args.data})
    data = load_csv(args.data)
    test = _require_test(data, args.data)
    theta = validate_priors(cfg["data"]["theta"])
    _, n_u, n_a = data.counts
    out = {}
    for method in methods:
        bcfg = BinaryPuConfig(method, merged_positive_prior(theta, n_u, n_a))
        report = train_binary_baseline(run_cfg, data, bcfg)
        save_scorer(report.model, run_dir / f"{method}_model.json")
        m = Metrics.from_predictions(predict_binary(report.model, test.x), test.y).to_dict()
        m["prior"] = bcfg.prior
        m["train_risk_final"] = report.epoch_risk[-1] if report.epoch_risk else None
        out[method] = m
    _write(run_dir, "metrics.json", _dump(out))
    print(run_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="puac", description="PU learning with augmented classes")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file (defaults apply to missing keys)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="explicit run directory")
        return p

    common(sub.add_parser("gen", help="sample the synthetic benchmark")).set_defaults(func=cmd_gen)

    p = common(sub.add_parser("train", help="train a three-bag scorer"))
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--priors", choices=("true", "estimated"), default="true")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("estimate-priors", help="estimate training priors"))
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_estimate)

    p = common(sub.add_parser("eval", help="evaluate a checkpoint"))
    p.add_argument("--model", required=True, help="checkpoint JSON")
    p.add_argument("--data", required=True, help="dataset CSV with test rows")
    p.add_argument("--bayes", type=int, default=0, metavar="N", help="also report Bayes accuracy from N draws")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("experiment", help="run an experiment grid"))
    p.add_argument("--grid", dest="config", help="TOML file with a [grid] table (alias of --config)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.set_defaults(func=cmd_experiment)

    p = common(sub.add_parser("baselines", help="binary PU baselines"))
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("upu", "nnpu", "both"), default="both")
    p.set_defaults(func=cmd_baselines)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = load_config(args.config, args.seed)
        return args.func(args, cfg) or 0
    except UsageError as exc:
        print(f"puac {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (PuacError, ValueError, OSError, RuntimeError) as exc:
        print(f"puac {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
