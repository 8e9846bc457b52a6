"""Acceptance gate: one test per criterion, each printing a PASS/FAIL verdict line.

Tolerances are the stated ones; nothing here is loosened to make a criterion pass.
"""

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from puac.cli import main
from puac.datagen import GaussianClassSpec, GenConfig, sample_labeled, sample_puac, standard_benchmark, standard_spec
from puac.evaluation import (
    TABLE3_MIXED,
    TABLE3_UNIFORM,
    TABLE4_FIRST,
    TABLE4_SECOND,
    ExperimentGrid,
    Metrics,
    bayes_accuracy,
    evaluate,
    run_experiment,
)
from puac.models import init_scorer
from puac.prior_estimation import KernelConfig, estimate_puac_priors_full
from puac.risk import (
    RewriteCoefficients,
    class_conditional_losses,
    empirical_puac_risk,
    rewrite_coefficients,
    supervised_risk,
)
from puac.training import train
from puac.types import LabeledSet, RunConfig, aggregate_priors, make_rng, validate_priors

from conftest import central_difference, record_criterion, rel_error

pytestmark = pytest.mark.acceptance

STD = validate_priors([[1, 0, 0], [0.5, 0.5, 0], [0.2, 0.3, 0.5]])
SUPERVISED = validate_priors([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
# Bayes accuracy of the standard benchmark at its pooled priors, from 10^6 draws
# (bayes_accuracy(standard_spec(), pooled priors, 10**6, seed=0)).
GOLDEN_BAYES = 0.909741


def _variant_alpha_a(theta, pi) -> RewriteCoefficients:
    """Coefficients with the cross term pi_a (theta_a^n - theta_a^p theta_u^n) / (...) instead of the derived one."""
    c = rewrite_coefficients(theta, pi)
    wrong = pi.a * (theta.a_n - theta.a_p * theta.u_n) / (theta.p_p * theta.u_n * theta.a_a)
    return replace(c, alpha_a=wrong)


def test_criterion_01_unbiasedness():
    start = time.perf_counter()
    n_bag, n_oracle, n_resamples = 2000, 10**6, 200
    pi = aggregate_priors(STD, n_bag, n_bag, n_bag)
    derived = rewrite_coefficients(STD, pi)
    variant = _variant_alpha_a(STD, pi)
    models = [init_scorer("mlp", 2, 3, make_rng(s, "acceptance", "scorer"), 8) for s in range(5)]
    # scale the output layer so the scorers are far from constant
    models = [m.with_flat(m.flat() * 2.0) for m in models]

    oracle = sample_labeled(standard_spec(), pi, n_oracle, make_rng(0, "acceptance", "oracle"))
    truth, truth_se = [], []
    for m in models:
        truth.append(supervised_risk(m, oracle, pi))
        per = class_conditional_losses(m, oracle)
        var = sum(pi.array[c] ** 2 * per[oracle.y == c + 1].var(ddof=1) / np.sum(oracle.y == c + 1) for c in range(3))
        truth_se.append(np.sqrt(var))

    risks = np.empty((2, len(models), n_resamples))
    for r in range(n_resamples):
        data = sample_puac(standard_benchmark(n_bag, 0, seed=10_000 + r))
        for j, m in enumerate(models):
            risks[0, j, r] = empirical_puac_risk(m, data, derived, need_grad=False)[0]
            risks[1, j, r] = empirical_puac_risk(m, data, variant, need_grad=False)[0]
    elapsed = time.perf_counter() - start

    mean = risks.mean(axis=2)
    se = np.sqrt(risks.var(axis=2, ddof=1) / n_resamples + np.asarray(truth_se) ** 2)
    z = np.abs(mean - np.asarray(truth)) / se
    derived_ok = bool(np.all(z[0] <= 3))
    variant_rejected = bool(np.all(z[1] > 3))
    ok = derived_ok and variant_rejected and elapsed <= 120
    record_criterion(
        1,
        "unbiasedness oracle",
        ok,
        f"derived |z| max {z[0].max():.2f} (<=3), variant |z| min {z[1].min():.1f} (>3), {elapsed:.0f}s (<=120s)",
    )
    assert derived_ok, z[0]
    assert variant_rejected, z[1]
    assert elapsed <= 120


def test_criterion_02_supervised_reduction():
    data = sample_puac(standard_benchmark(500, 0, seed=1, theta=SUPERVISED.rows))
    pi = aggregate_priors(SUPERVISED, *data.counts)
    coefs = rewrite_coefficients(SUPERVISED, pi)
    pooled = LabeledSet(np.concatenate([b.x for b in data.bags]), np.concatenate([b.labels for b in data.bags]))
    worst = 0.0
    rng = make_rng(2, "acceptance", "reduction")
    for i in range(20):
        kind, out = ("ovr", 3) if i % 2 == 0 else ("ordinal", 1)
        m = init_scorer("mlp" if i % 4 < 2 else "linear", 2, out, rng, 6)
        r, _ = empirical_puac_risk(m, data, coefs, kind, need_grad=False)
        worst = max(worst, abs(r - supervised_risk(m, pooled, pi, kind)))
    ok = worst <= 1e-12
    record_criterion(2, "supervised reduction", ok, f"max |difference| {worst:.1e} over 20 models (<=1e-12)")
    assert ok


def test_criterion_03_gradients():
    data = sample_puac(standard_benchmark(40, 0, seed=3))
    coefs = rewrite_coefficients(STD, aggregate_priors(STD, *data.counts))
    rng = make_rng(3, "acceptance", "gradients")
    worst = {"ovr": 0.0, "ordinal": 0.0}
    skipped = 0
    for kind, out in (("ovr", 3), ("ordinal", 1)):
        checked = 0
        while checked < 50:
            m = init_scorer("mlp", 2, out, rng, 5)
            m = m.with_flat(m.flat() * rng.uniform(0.5, 3.0))
            if kind == "ordinal":
                f = np.concatenate([m.score(b.x)[:, 0] for b in data.bags])
                if np.min(np.abs(f[:, None] - np.array([1.0, 2.0, 3.0]))) < 1e-4:
                    skipped += 1
                    continue
            _, g = empirical_puac_risk(m, data, coefs, kind)
            fd = central_difference(lambda p: empirical_puac_risk(m.with_flat(p), data, coefs, kind, need_grad=False)[0], m.flat())
            worst[kind] = max(worst[kind], rel_error(g, fd))
            checked += 1
    ok = max(worst.values()) <= 1e-5
    record_criterion(
        3,
        "gradient correctness",
        ok,
        f"max rel. error OVR {worst['ovr']:.1e}, ordinal {worst['ordinal']:.1e} (<=1e-5; {skipped} kink points redrawn)",
    )
    assert ok


def test_criterion_04_bayes_consistency():
    start = time.perf_counter()
    gen = standard_benchmark(8000, 20000, seed=4)
    acc_bayes, se_bayes = bayes_accuracy(standard_spec(), gen.pooled_priors, 10**6, seed=0)
    data = sample_puac(gen)
    rep = train(RunConfig(seed=4, epochs=300, hidden_width=32), data, STD)
    acc = evaluate(rep.model, data.test, "ovr").overall
    elapsed = time.perf_counter() - start
    gap = acc_bayes - acc
    ok = abs(gap) <= 0.02 and elapsed <= 300 and abs(acc_bayes - GOLDEN_BAYES) <= 1e-9
    record_criterion(
        4,
        "Bayes consistency",
        ok,
        f"test acc {acc:.4f} vs Bayes {acc_bayes:.4f}±{se_bayes:.4f}: gap {100 * gap:.2f} pp (<=2 pp), {elapsed:.0f}s (<=300s)",
    )
    assert abs(acc_bayes - GOLDEN_BAYES) <= 1e-9
    assert abs(gap) <= 0.02
    assert elapsed <= 300


def test_criterion_05_consistency_trend():
    sizes = (500, 2000, 8000)
    grid = ExperimentGrid("size", tuple((n,) for n in sizes), seeds=(0, 1, 2, 3, 4))
    rep = run_experiment(grid, RunConfig(epochs=100), standard_benchmark(500, 6000))
    assert not any(r["error"] for r in rep.rows)
    err = [1 - e["mean"]["overall_acc"] for e in rep.summary()]
    rises = np.diff(err)
    ok = bool(np.all(rises <= 0.01))
    record_criterion(
        5,
        "consistency trend",
        ok,
        "mean test error " + ", ".join(f"n={n}: {100 * e:.2f}%" for n, e in zip(sizes, err)) + " (no rise >1 pp)",
    )
    assert ok


def test_criterion_06_baseline_dominance():
    grid = ExperimentGrid(seeds=(0, 1, 2), methods=("upuac", "upu", "nnpu"))
    rep = run_experiment(grid, RunConfig(epochs=100), standard_benchmark(2000, 6000))
    assert not any(r["error"] for r in rep.rows)
    summ = {e["method"]: e["mean"] for e in rep.summary()}
    margin = summ["upuac"]["overall_acc"] - max(summ["upu"]["overall_acc"], summ["nnpu"]["overall_acc"])
    ident = summ["upuac"]["ident_a"]
    base_ident = max(summ["upu"]["ident_a"], summ["nnpu"]["ident_a"])
    dominance = margin >= 0.10
    identifies = ident >= 0.9
    ok = dominance and identifies and base_ident == 0.0
    _, _, bayes_recall_a = _bayes_class_recall()
    record_criterion(
        6,
        "baseline dominance",
        ok,
        f"UPUAC {100 * summ['upuac']['overall_acc']:.2f}% vs UPU {100 * summ['upu']['overall_acc']:.2f}% / "
        f"NNPU {100 * summ['nnpu']['overall_acc']:.2f}%: margin {100 * margin:.1f} pp (>=10 pp); "
        f"UPUAC A-identification {ident:.3f} (>=0.9; the Bayes rule itself reaches only {bayes_recall_a:.3f}); "
        f"baselines {base_ident:.1f}",
    )
    assert dominance
    assert base_ident == 0.0
    assert identifies, f"A-identification {ident:.3f} < 0.9 (Bayes-optimal A recall {bayes_recall_a:.3f})"


def _bayes_class_recall():
    """Per-class recall of the Bayes rule on the standard benchmark (10^6 draws)."""
    from puac.evaluation import bayes_predict

    pi = standard_benchmark().pooled_priors
    s = sample_labeled(standard_spec(), pi, 10**6, make_rng(0, "acceptance", "bayes-recall"))
    m = Metrics.from_predictions(bayes_predict(standard_spec(), pi, s.x), s.y)
    return m.acc_p, m.acc_n, m.acc_a


def test_criterion_07_prior_perturbation():
    grid = ExperimentGrid("perturb", TABLE3_UNIFORM + TABLE3_MIXED, seeds=(0, 1, 2))
    rep = run_experiment(grid, RunConfig(epochs=100), standard_benchmark(2000, 6000))
    assert not any(r["error"] for r in rep.rows)
    means = np.array([e["mean"]["overall_acc"] for e in rep.summary()])
    spread = means.max() - means.min()
    ok = spread <= 0.02
    record_criterion(
        7,
        "prior-perturbation robustness",
        ok,
        f"mean accuracy {100 * means.min():.2f}%..{100 * means.max():.2f}% over 10 eta triples: spread {100 * spread:.2f} pp (<=2 pp)",
    )
    assert ok


def test_criterion_08_shift():
    grid = ExperimentGrid("shift", TABLE4_FIRST + TABLE4_SECOND, seeds=(0, 1, 2, 3, 4))
    rep = run_experiment(grid, RunConfig(epochs=100), standard_benchmark(2000, 6000))
    assert not any(r["error"] for r in rep.rows)
    means = np.array([e["mean"]["overall_acc"] for e in rep.summary()])
    spread = means.max() - means.min()
    ok = spread <= 0.02
    record_criterion(
        8,
        "shift robustness",
        ok,
        f"mean accuracy {100 * means.min():.2f}%..{100 * means.max():.2f}% over 10 shift triples: spread {100 * spread:.2f} pp (<=2 pp)",
    )
    assert ok


def test_criterion_09_prior_estimation():
    spec = GaussianClassSpec(np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]]), np.ones((3, 2)))
    truth = {"u_p": 0.5, "a_p": 0.2, "a_n": 0.3}
    worst = 0.0
    losses = []
    for seed in range(5):
        gen = GenConfig(spec, STD, 4000, 4000, 4000, 6000, None, seed)
        data = sample_puac(gen)
        est = estimate_puac_priors_full(data, KernelConfig(seed=seed))
        worst = max(worst, max(abs(est.raw[k] - v) for k, v in truth.items()))
        cfg = RunConfig(seed=seed, epochs=100)
        acc_true = evaluate(train(cfg, data, STD).model, data.test).overall
        acc_est = evaluate(train(cfg, data, est.theta).model, data.test).overall
        losses.append(acc_true - acc_est)
    loss = float(np.mean(losses))
    ok = worst <= 0.05 and loss <= 0.03
    record_criterion(
        9,
        "MPE accuracy",
        ok,
        f"max |error| {worst:.3f} over 3 priors x 5 seeds (<=0.05); end-to-end accuracy loss {100 * loss:.2f} pp (<=3 pp)",
    )
    assert worst <= 0.05
    assert loss <= 0.03


def _manifest_without_paths(path: Path) -> dict:
    doc = json.loads(path.read_text())
    for entry in doc["inputs"].values():
        entry.pop("path")
    return doc


def test_criterion_10_determinism(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(
        "seed = 5\n[data]\nn_p = 300\nn_u = 300\nn_a = 300\nn_test = 600\n[train]\nepochs = 5\n"
        '[grid]\nkind = "shift"\ncells = [[0.8, 1.0, 1.2], [1.0, 1.0, 1.0]]\nseeds = [0, 1]\nmethods = ["upuac", "upu"]\n'
    )
    dirs = []
    for rep in ("a", "b"):
        base = tmp_path / rep
        assert main(["gen", "--config", str(cfg), "--out", str(base / "gen")]) == 0
        data = str(base / "gen" / "dataset.csv")
        assert main(["train", "--config", str(cfg), "--data", data, "--out", str(base / "train")]) == 0
        assert main(["experiment", "--grid", str(cfg), "--out", str(base / "exp")]) == 0
        assert main(["experiment", "--grid", str(cfg), "--jobs", "2", "--out", str(base / "exp2")]) == 0
        dirs.append(base)
    capsys.readouterr()
    compared, differing = 0, []
    for path in sorted(dirs[0].rglob("*")):
        if path.is_dir() or path.name == "timing.json":
            continue
        other = dirs[1] / path.relative_to(dirs[0])
        compared += 1
        if path.name == "manifest.json":
            # manifests name the input files, whose directories differ between the two invocations
            same = _manifest_without_paths(path) == _manifest_without_paths(other)
        else:
            same = path.read_bytes() == other.read_bytes()
        if not same:
            differing.append(str(path.relative_to(dirs[0])))
    parallel_same = (dirs[0] / "exp" / "report.csv").read_bytes() == (dirs[0] / "exp2" / "report.csv").read_bytes()
    ok = compared >= 8 and not differing and parallel_same
    record_criterion(
        10,
        "determinism",
        ok,
        f"{compared} artifacts compared across two invocations, {len(differing)} differ; --jobs 2 report identical: {parallel_same}",
    )
    assert not differing
    assert parallel_same
