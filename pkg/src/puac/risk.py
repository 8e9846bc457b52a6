"""Unbiased three-bag risk for PU learning with augmented classes.

The supervised risk ``sum_c pi_c E_{x~p_c}[l(f(x), c)]`` cannot be estimated
directly because negative and augmented samples are never labeled. Each
class-conditional density is a signed combination of the three observable
bag densities::

    p_p = P_p / theta_p^p
    p_n = (P_u - theta_u^p p_p) / theta_u^n
    p_a = (P_a - theta_a^p p_p - theta_a^n p_n) / theta_a^a

Substituting them gives nine constant weights (three per bag) such that the
supervised risk equals ``E_{P_p}[l~_p] + E_{P_u}[l~_u] + E_{P_a}[l~_a]`` with
``l~_s(f) = sum_c w[s, c] l(f, c)``. Sample means over the bags are then an
unbiased estimate of the supervised risk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePrior, DimensionMismatch, EmptyBag, MissingClass
from .losses import Surrogate, ordinal_weighted_loss, ovr_losses_all_classes, ovr_weighted_loss
from .models import Scorer
from .types import (
    DEGENERACY_TOL,
    AggregatedPriors,
    LabeledSet,
    PriorMatrix,
    PuacDataset,
    SourceBag,
)

LOSS_KINDS = ("ovr", "ordinal")


@dataclass(frozen=True)
class RewriteCoefficients:
    """Weights of the corrected losses: ``alpha`` on D_p, ``beta`` on D_u, ``gamma`` on D_a.

    Each triple is ordered (P, N, A).
    """

    alpha_p: float
    alpha_n: float
    alpha_a: float
    beta_p: float
    beta_n: float
    beta_a: float
    gamma_p: float
    gamma_n: float
    gamma_a: float

    @property
    def matrix(self) -> np.ndarray:
        """3x3 array, rows (Pos, Unl, Aug) bags, columns (P, N, A) classes."""
        return np.array(
            [
                [self.alpha_p, self.alpha_n, self.alpha_a],
                [self.beta_p, self.beta_n, self.beta_a],
                [self.gamma_p, self.gamma_n, self.gamma_a],
            ]
        )

    def weights(self, bag: SourceBag) -> np.ndarray:
        return self.matrix[bag.index]

    def scaled(self, t: float) -> "RewriteCoefficients":
        return RewriteCoefficients(*(t * v for v in self.matrix.ravel()))

    @classmethod
    def from_matrix(cls, m) -> "RewriteCoefficients":
        return cls(*(float(v) for v in np.asarray(m, dtype=np.float64).ravel()))

    def to_dict(self) -> dict:
        names = [f"{g}_{c}" for g in ("alpha", "beta", "gamma") for c in "pna"]
        return dict(zip(names, self.matrix.ravel().tolist()))


def rewrite_coefficients(theta: PriorMatrix, pi: AggregatedPriors) -> RewriteCoefficients:
    """Corrected-loss weights for priors ``theta`` and class priors ``pi``.

    The cross term on the positive bag is
    ``pi_a (theta_a^n theta_u^p - theta_a^p theta_u^n) / (theta_p^p theta_u^n theta_a^a)``,
    obtained by eliminating ``p_n`` from ``p_a``.
    """
    t_pp, t_up, t_un = theta.p_p, theta.u_p, theta.u_n
    t_ap, t_an, t_aa = theta.a_p, theta.a_n, theta.a_a
    if t_un <= DEGENERACY_TOL:
        raise DegeneratePrior("theta[unl][n] = 0; use a plain PU estimator instead")
    if t_aa <= DEGENERACY_TOL:
        raise DegeneratePrior("theta[aug][a] = 0; use a plain PU estimator instead")
    return RewriteCoefficients(
        alpha_p=pi.p / t_pp,
        alpha_n=-pi.n * t_up / (t_pp * t_un),
        alpha_a=pi.a * (t_an * t_up - t_ap * t_un) / (t_pp * t_un * t_aa),
        beta_p=0.0,
        beta_n=pi.n / t_un,
        beta_a=-t_an * pi.a / (t_un * t_aa),
        gamma_p=0.0,
        gamma_n=0.0,
        gamma_a=pi.a / t_aa,
    )


def _check_kind(loss_kind: str) -> None:
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"loss_kind must be one of {LOSS_KINDS}, got {loss_kind!r}")


def weighted_loss(scores, weights, loss_kind: str = "ovr", surrogate: Surrogate | str = Surrogate.SQUARED):
    """Per-sample ``sum_c w_c l(f(x), c)`` and its score gradient.

    ``scores`` is ``(n, 3)`` for ``"ovr"`` or ``(n, 1)`` for ``"ordinal"``.
    """
    _check_kind(loss_kind)
    f = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    width = 3 if loss_kind == "ovr" else 1
    if f.shape[1] != width:
        raise DimensionMismatch(f"{loss_kind} loss expects {width} scores per sample, got {f.shape[1]}")
    if loss_kind == "ovr":
        return ovr_weighted_loss(f, weights, surrogate)
    return ordinal_weighted_loss(f, weights)


def corrected_loss(
    bag: SourceBag,
    scores,
    coefs: RewriteCoefficients,
    loss_kind: str = "ovr",
    surrogate: Surrogate | str = Surrogate.SQUARED,
):
    """Corrected loss of samples drawn from ``bag``; may be negative.

    Returns ``(value, grad)``; for a single score vector ``value`` is a float.
    """
    f = np.asarray(scores, dtype=np.float64)
    if loss_kind == "ordinal":
        single = f.ndim == 0
        f = f.reshape(-1, 1)
    else:
        single = f.ndim == 1
    value, grad = weighted_loss(f, coefs.weights(bag), loss_kind, surrogate)
    if single:
        return float(value[0]), grad[0]
    return value, grad


def _bag_term(model: Scorer, x: np.ndarray, weights: np.ndarray, loss_kind: str, surrogate, need_grad: bool):
    scores, cache = model.forward(x)
    value, g = weighted_loss(scores, weights, loss_kind, surrogate)
    n = x.shape[0]
    risk = float(value.sum() / n)
    if not need_grad:
        return risk, None
    return risk, model.backward(cache, g / n)


def puac_risk_arrays(
    model: Scorer,
    arrays,
    weights: np.ndarray,
    loss_kind: str = "ovr",
    surrogate: Surrogate | str = Surrogate.SQUARED,
    *,
    need_grad: bool = True,
    batch_size: int | None = None,
    rng: np.random.Generator | None = None,
):
    """Three-bag risk on raw sample matrices ``(x_pos, x_unl, x_aug)`` with a 3x3 weight matrix."""
    if batch_size is not None and rng is None:
        raise ValueError("minibatch evaluation needs an rng")
    total = 0.0
    grad = np.zeros(model.n_params) if need_grad else None
    for x, w in zip(arrays, weights):
        if x.shape[0] == 0:
            raise EmptyBag("cannot average over an empty bag")
        if batch_size is not None:
            x = x[rng.integers(0, x.shape[0], size=batch_size)]
        r, g = _bag_term(model, x, w, loss_kind, surrogate, need_grad)
        total += r
        if need_grad:
            grad += g
    return total, grad


def empirical_puac_risk(
    model: Scorer,
    data: PuacDataset,
    coefs: RewriteCoefficients,
    loss_kind: str = "ovr",
    surrogate: Surrogate | str = Surrogate.SQUARED,
    *,
    need_grad: bool = True,
    batch_size: int | None = None,
    rng: np.random.Generator | None = None,
):
    """Sum over bags of the mean corrected loss, and its parameter gradient.

    With ``batch_size`` set, each bag is subsampled independently with
    replacement (``batch_size`` draws per bag), which keeps the estimate
    unbiased. The three bag terms are added in the fixed order Pos, Unl, Aug.

    Returns
    -------
    risk : float
    grad : ndarray of shape ``(model.n_params,)`` or None
    """
    _check_kind(loss_kind)
    data.require_nonempty()
    return puac_risk_arrays(
        model,
        [b.x for b in data.bags],
        coefs.matrix,
        loss_kind,
        surrogate,
        need_grad=need_grad,
        batch_size=batch_size,
        rng=rng,
    )


def supervised_risk(
    model: Scorer,
    labeled: LabeledSet,
    pi: AggregatedPriors,
    loss_kind: str = "ovr",
    surrogate: Surrogate | str = Surrogate.SQUARED,
) -> float:
    """``sum_c pi_c * mean_{x in class c} l(f(x), c)`` on fully labeled data."""
    _check_kind(loss_kind)
    if len(labeled) == 0:
        raise EmptyBag("labeled set is empty")
    scores, _ = model.forward(labeled.x)
    total = 0.0
    for c in (1, 2, 3):
        mask = labeled.y == c
        if not mask.any():
            raise MissingClass(f"class {'pna'[c - 1]} has no labeled samples")
        value, _ = weighted_loss(scores[mask], np.eye(3)[c - 1], loss_kind, surrogate)
        total += pi.array[c - 1] * value.mean()
    return float(total)


def class_conditional_losses(model: Scorer, labeled: LabeledSet, loss_kind: str = "ovr", surrogate=Surrogate.SQUARED):
    """Per-sample loss against the sample's own label (useful for standard errors)."""
    scores, _ = model.forward(labeled.x)
    if loss_kind == "ovr":
        all_losses = ovr_losses_all_classes(scores, surrogate)
    else:
        all_losses = np.abs(scores.reshape(-1, 1) - np.array([1.0, 2.0, 3.0]))
    return all_losses[np.arange(len(labeled)), labeled.y - 1]
