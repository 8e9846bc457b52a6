"""Binary positive-unlabeled baselines that ignore the augmented class.

The unlabeled and augmented bags are merged into one unlabeled pool and a
single real-valued score ``g`` separates positives (``g > 0``) from everything
else. Predictions are mapped onto the three-class label space as P or N, so
an augmented test sample is never predicted correctly.

Two risks are provided:

* the unbiased estimator ``pi E_p[l(g, +1)] + E_u[l(g, -1)] - pi E_p[l(g, -1)]``
* the non-negative variant, which clamps the negative-class part at zero.

``l(g, +1) = phi(g)`` and ``l(g, -1) = phi(-g)`` for a margin surrogate ``phi``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBag
from .losses import Surrogate, phi
from .models import Scorer
from .training import TrainReport, minimize_risk
from .types import PriorMatrix, PuacDataset, RunConfig

METHODS = ("upu", "nnpu")
DEFAULT_SURROGATE = {"upu": Surrogate.LOGISTIC, "nnpu": Surrogate.SIGMOID}


@dataclass(frozen=True)
class BinaryPuConfig:
    """Settings for one binary baseline.

    Parameters
    ----------
    method : {"upu", "nnpu"}
    prior : float
        Positive fraction of the merged unlabeled pool, in (0, 1).
    surrogate : Surrogate or str, optional
        Defaults to logistic for ``"upu"`` and sigmoid for ``"nnpu"``.
    """

    method: str
    prior: float
    surrogate: Surrogate | str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.prior < 1.0:
            raise ValueError(f"binary class prior must lie in (0, 1), got {self.prior}")
        s = DEFAULT_SURROGATE[self.method] if self.surrogate is None else Surrogate.parse(self.surrogate)
        object.__setattr__(self, "surrogate", s)

    @property
    def nn_clamp(self) -> bool:
        return self.method == "nnpu"


def merged_positive_prior(theta: PriorMatrix, n_u: int, n_a: int) -> float:
    """Fraction of positives in the union of the unlabeled and augmented bags."""
    if n_u + n_a == 0:
        raise EmptyBag("merged unlabeled pool is empty")
    return (n_u * theta.u_p + n_a * theta.a_p) / (n_u + n_a)


def _parts(model: Scorer, x: np.ndarray, surrogate, need_grad: bool):
    """Means of ``phi(g)`` and ``phi(-g)`` over ``x`` and their parameter gradients."""
    g, cache = model.forward(x)
    g = g[:, 0]
    n = x.shape[0]
    pos_v, pos_d = phi(surrogate, g)
    neg_v, neg_d = phi(surrogate, -g)
    if not need_grad:
        return pos_v.mean(), neg_v.mean(), None, None
    grad_pos = model.backward(cache, (pos_d / n)[:, None])
    grad_neg = model.backward(cache, (-neg_d / n)[:, None])
    return pos_v.mean(), neg_v.mean(), grad_pos, grad_neg


def _check(model: Scorer, x_p, x_u, prior: float):
    if model.output_dim != 1:
        raise ValueError("binary baselines need a scorer with one output")
    if len(x_p) == 0 or len(x_u) == 0:
        raise EmptyBag("binary risk needs non-empty positive and unlabeled samples")
    if not 0.0 <= prior <= 1.0:
        raise ValueError(f"class prior must lie in [0, 1], got {prior}")


def upu_risk(model: Scorer, x_p, x_u, prior: float, surrogate=Surrogate.LOGISTIC, need_grad: bool = True):
    """Unbiased binary PU risk and its gradient.

    With ``prior = 0`` this is the plain negative-class risk on ``x_u``.
    """
    _check(model, x_p, x_u, prior)
    p_pos, p_neg, gp_pos, gp_neg = _parts(model, np.asarray(x_p), surrogate, need_grad)
    _, u_neg, _, gu_neg = _parts(model, np.asarray(x_u), surrogate, need_grad)
    risk = float(prior * p_pos + u_neg - prior * p_neg)
    if not need_grad:
        return risk, None
    return risk, prior * gp_pos + gu_neg - prior * gp_neg


def nnpu_risk(model: Scorer, x_p, x_u, prior: float, surrogate=Surrogate.SIGMOID, need_grad: bool = True):
    """Non-negative binary PU risk: the negative-class part is clamped at zero.

    When the clamp is active the gradient is that of the positive part alone.
    """
    _check(model, x_p, x_u, prior)
    p_pos, p_neg, gp_pos, gp_neg = _parts(model, np.asarray(x_p), surrogate, need_grad)
    _, u_neg, _, gu_neg = _parts(model, np.asarray(x_u), surrogate, need_grad)
    neg_part = u_neg - prior * p_neg
    risk = float(prior * p_pos + max(0.0, neg_part))
    if not need_grad:
        return risk, None
    grad = prior * gp_pos
    if neg_part > 0:
        grad = grad + gu_neg - prior * gp_neg
    return risk, grad


def predict_binary(model: Scorer, x) -> np.ndarray:
    """Codes 1 (P) where ``g(x) > 0`` and 2 (N) elsewhere."""
    g, _ = model.forward(x)
    return np.where(g[:, 0] > 0, 1, 2).astype(np.int64)


def train_binary_baseline(cfg: RunConfig, data: PuacDataset, bcfg: BinaryPuConfig) -> TrainReport:
    """Fit a binary scorer on positives versus the merged unlabeled and augmented bags."""
    data.require_nonempty()
    x_p = data.pos.x
    x_u = np.concatenate([data.unl.x, data.aug.x])
    risk = nnpu_risk if bcfg.nn_clamp else upu_risk

    def risk_fn(model, arrays, need_grad, batch_size, rng):
        xp, xu = arrays
        if batch_size is not None:
            xp = xp[rng.integers(0, xp.shape[0], size=batch_size)]
            xu = xu[rng.integers(0, xu.shape[0], size=batch_size)]
        return risk(model, xp, xu, bcfg.prior, bcfg.surrogate, need_grad=need_grad)

    return minimize_risk(cfg, [x_p, x_u], risk_fn, 1, stream=bcfg.method)
