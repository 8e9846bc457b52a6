"""Minibatch empirical risk minimization of the three-bag risk."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .models import Scorer, init_scorer
from .errors import EmptyBag
from .risk import RewriteCoefficients, puac_risk_arrays, rewrite_coefficients
from .types import AggregatedPriors, PriorMatrix, PuacDataset, RunConfig, aggregate_priors, make_rng


class Adadelta:
    """Adadelta with per-coordinate running averages of squared gradients and updates.

    ``update = -lr * sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g``
    """

    def __init__(self, n_params: int, rho: float = 0.95, eps: float = 1e-6, lr: float = 1.0):
        if not 0.0 < rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.rho = rho
        self.eps = eps
        self.lr = lr
        self.sq_grad = np.zeros(n_params)
        self.sq_update = np.zeros(n_params)

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Advance the accumulators and return the parameter increment."""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.sq_grad.shape:
            raise ValueError(f"gradient shape {grad.shape} != {self.sq_grad.shape}")
        rho = self.rho
        self.sq_grad = rho * self.sq_grad + (1 - rho) * grad * grad
        delta = -np.sqrt(self.sq_update + self.eps) / np.sqrt(self.sq_grad + self.eps) * grad
        self.sq_update = rho * self.sq_update + (1 - rho) * delta * delta
        return self.lr * delta


class GradientDescent:
    def __init__(self, n_params: int, lr: float = 0.1):
        self.lr = lr

    def step(self, grad: np.ndarray) -> np.ndarray:
        return -self.lr * np.asarray(grad, dtype=np.float64)


def make_optimizer(cfg: RunConfig, n_params: int):
    if cfg.optimizer == "adadelta":
        return Adadelta(n_params, cfg.rho, cfg.eps, cfg.learning_rate)
    return GradientDescent(n_params, cfg.learning_rate)


@dataclass
class TrainReport:
    epoch_risk: list[float]
    model: Scorer
    seed: int
    coefficients: RewriteCoefficients | None
    config: RunConfig
    val_risk: list[float] | None = None
    best_epoch: int | None = None
    wall_clock: float = 0.0

    def to_dict(self, include_wall_clock: bool = True) -> dict:
        out = {
            "seed": self.seed,
            "config": asdict(self.config),
            "coefficients": None if self.coefficients is None else self.coefficients.to_dict(),
            "epoch_risk": self.epoch_risk,
            "val_risk": self.val_risk,
            "best_epoch": self.best_epoch,
        }
        if include_wall_clock:
            out["wall_clock_seconds"] = self.wall_clock
        return out

    def to_json(self, include_wall_clock: bool = True) -> str:
        return json.dumps(self.to_dict(include_wall_clock), indent=1)


def _split(arrays: list[np.ndarray], fraction: float, rng: np.random.Generator):
    train, val = [], []
    for x in arrays:
        n = x.shape[0]
        n_val = min(n - 1, max(1, int(round(fraction * n))))
        perm = rng.permutation(n)
        val.append(x[perm[:n_val]])
        train.append(x[perm[n_val:]])
    return train, val


def minimize_risk(
    cfg: RunConfig,
    arrays: list[np.ndarray],
    risk_fn,
    output_dim: int,
    stream: str = "puac",
) -> TrainReport:
    """Minibatch loop shared by the three-bag learner and the binary baselines.

    ``arrays`` holds one sample matrix per bag. ``risk_fn(model, arrays,
    need_grad, batch_size, rng)`` returns ``(risk, grad)``; with a batch size
    it must subsample each bag itself. Random streams (initialization, split,
    minibatches) are all derived from ``cfg.seed`` and ``stream``.
    """
    start = time.perf_counter()
    if any(x.shape[0] == 0 for x in arrays):
        raise EmptyBag("cannot train on an empty bag")
    dim = arrays[0].shape[1]
    model = init_scorer(cfg.model_kind, dim, output_dim, make_rng(cfg.seed, stream, "init"), cfg.hidden_width)
    train_arrays, val_arrays = arrays, None
    if cfg.val_fraction > 0:
        train_arrays, val_arrays = _split(arrays, cfg.val_fraction, make_rng(cfg.seed, stream, "split"))

    batch_rng = make_rng(cfg.seed, stream, "batches")
    opt = make_optimizer(cfg, model.n_params)
    params = model.flat()
    steps = math.ceil(max(x.shape[0] for x in train_arrays) / cfg.batch_size)
    epoch_risk: list[float] = []
    val_risk: list[float] | None = [] if val_arrays is not None else None
    best_value, best_params, best_epoch = math.inf, params, None
    stale = 0
    for epoch in range(cfg.epochs):
        for _ in range(steps):
            _, grad = risk_fn(model, train_arrays, True, cfg.batch_size, batch_rng)
            params = params + opt.step(grad)
            model = model.with_flat(params)
        epoch_risk.append(risk_fn(model, train_arrays, False, None, None)[0])
        if val_arrays is not None:
            v = risk_fn(model, val_arrays, False, None, None)[0]
            val_risk.append(v)
            if v < best_value:
                best_value, best_params, best_epoch, stale = v, params, epoch, 0
            else:
                stale += 1
                if cfg.patience and stale >= cfg.patience:
                    break
    if best_epoch is not None:
        model = model.with_flat(best_params)
    return TrainReport(
        epoch_risk=epoch_risk,
        model=model,
        seed=cfg.seed,
        coefficients=None,
        config=cfg,
        val_risk=val_risk,
        best_epoch=best_epoch,
        wall_clock=time.perf_counter() - start,
    )


def train(
    cfg: RunConfig,
    data: PuacDataset,
    theta: PriorMatrix,
    pi: AggregatedPriors | None = None,
) -> TrainReport:
    """Minimize the empirical three-bag risk for priors ``theta``.

    ``pi`` defaults to the pooled priors implied by ``theta`` and the bag
    sizes. Each step draws ``cfg.batch_size`` samples with replacement from
    every bag; an epoch is ``ceil(max bag size / batch_size)`` steps. The
    full-bag risk is recorded after every epoch. No non-negativity correction
    is applied, so recorded risks may be negative.
    """
    data.require_nonempty()
    if pi is None:
        pi = aggregate_priors(theta, *data.counts)
    coefs = rewrite_coefficients(theta, pi)
    weights = coefs.matrix

    def risk_fn(model, arrays, need_grad, batch_size, rng):
        return puac_risk_arrays(
            model, arrays, weights, cfg.loss_kind, cfg.surrogate, need_grad=need_grad, batch_size=batch_size, rng=rng
        )

    report = minimize_risk(cfg, [b.x for b in data.bags], risk_fn, cfg.output_dim)
    report.coefficients = coefs
    return report
