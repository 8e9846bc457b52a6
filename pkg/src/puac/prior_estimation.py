"""Class-prior estimation from the three bags with kernel mean embeddings.

Mixture proportion estimation (MPE): given samples from a mixture
``F = kappa H + (1 - kappa) G`` and from the component ``H``, find the largest
``kappa`` for which such a ``G`` exists. For ``lam = 1 / (1 - kappa)`` the
point ``lam mu_F + (1 - lam) mu_H`` in the RKHS is the embedding of ``G``; it
stays inside the convex hull of the mixture's feature maps up to the true
proportion and leaves it afterwards. The distance to that hull is therefore
flat (near zero) up to ``lam*`` and grows linearly past it. The estimate is
the first grid point at which the curve's slope crosses a threshold.

The hull is approximated by convex reweightings of (a subsample of) the
mixture sample. Embeddings may carry negative weights: the pseudo-negative
embedding ``(mu_U - theta_u^p mu_P) / theta_u^n`` is used directly, without
resampling points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls
from scipy.spatial.distance import cdist, pdist

from .errors import DegeneratePrior, DimensionMismatch, EmptySampleSet, NonConvergence
from .types import DEGENERACY_TOL, PriorMatrix, PuacDataset, make_rng, validate_priors

_CHUNK = 2048


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian RBF kernel ``exp(-|x - y|^2 / (2 bandwidth^2))``.

    ``bandwidth="median"`` resolves to the median pairwise distance of a
    subsample of at most ``max_points`` points.
    """

    bandwidth: float | str = "median"
    max_points: int = 1000
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise ValueError(f"bandwidth must be positive or 'median', got {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.max_points < 2:
            raise ValueError("max_points must be >= 2")

    def resolve(self, *samples: np.ndarray) -> "KernelConfig":
        """Return a copy with a numeric bandwidth."""
        if not isinstance(self.bandwidth, str):
            return self
        return KernelConfig(median_bandwidth(np.concatenate(samples), self.max_points, self.seed), self.max_points, self.seed)


@dataclass(frozen=True)
class MpeConfig:
    """Knobs of the gradient-threshold estimator.

    The curve is evaluated at ``kappa = 0.01, 0.02, ..., 0.99``. The estimate
    is the left end of the first grid interval on which the slope of the
    distance (as a function of ``lam = 1/(1-kappa)``) reaches
    ``slope_threshold`` times the reference slope taken on the tail of the
    curve, sustained over ``persistence`` consecutive intervals. Slopes below
    ``noise_multiplier`` times the embedding noise scale
    ``sqrt(sum w_mix^2 + sum w_comp^2)`` (an upper bound on the RKHS error of
    the empirical embeddings, since ``k(x, x) = 1``) never count as steep. A
    curve that never becomes steep gives 1; one that is steep from
    ``kappa = 0`` gives 0. ``hull_points`` caps the number of mixture points
    spanning the hull.
    """

    grid_step: float = 0.01
    slope_threshold: float = 0.2
    noise_multiplier: float = 1.5
    persistence: int = 3
    hull_points: int = 600
    max_iter: int = 20000
    eig_floor: float = 1e-6
    sum_weight: float = 1e3


def median_bandwidth(x: np.ndarray, max_points: int = 1000, seed: int = 0) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        raise EmptySampleSet("median heuristic needs at least two points")
    if x.shape[0] > max_points:
        idx = make_rng(seed, "prior_estimation", "median").choice(x.shape[0], size=max_points, replace=False)
        x = x[np.sort(idx)]
    d = pdist(x)
    med = float(np.median(d[d > 0])) if np.any(d > 0) else 1.0
    return med


def rbf_gram(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(x, y, "sqeuclidean") / (2.0 * bandwidth**2))


@dataclass(frozen=True)
class Embedding:
    """Signed empirical measure ``sum_i w_i delta(x_i)`` representing a kernel mean embedding.

    Linear combinations concatenate support points, so any signed mixture of
    empirical means is exact. Inner products are Gram sums.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if p.shape[0] != w.shape[0]:
            raise DimensionMismatch("one weight per support point is required")
        if p.shape[0] == 0:
            raise EmptySampleSet("embedding has no support points")
        if not np.all(np.isfinite(w)):
            raise ValueError("embedding weights must be finite")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def mean_of(cls, x: np.ndarray) -> "Embedding":
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[0] == 0:
            raise EmptySampleSet("cannot embed an empty sample set")
        return cls(x, np.full(x.shape[0], 1.0 / x.shape[0]))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __add__(self, other: "Embedding") -> "Embedding":
        return Embedding(np.concatenate([self.points, other.points]), np.concatenate([self.weights, other.weights]))

    def __sub__(self, other: "Embedding") -> "Embedding":
        return self + other * -1.0

    def __mul__(self, t: float) -> "Embedding":
        return Embedding(self.points, self.weights * float(t))

    __rmul__ = __mul__

    def merged(self) -> "Embedding":
        """Same measure with coincident support points combined (exact cancellation of equal terms)."""
        pts, inv = np.unique(self.points, axis=0, return_inverse=True)
        w = np.zeros(pts.shape[0])
        np.add.at(w, inv.ravel(), self.weights)
        return Embedding(pts, w)

    def evaluate(self, x: np.ndarray, bandwidth: float) -> np.ndarray:
        """Witness function ``sum_i w_i k(x_i, x)`` at each row of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], _CHUNK):
            out[s : s + _CHUNK] = rbf_gram(x[s : s + _CHUNK], self.points, bandwidth) @ self.weights
        return out

    def inner(self, other: "Embedding", bandwidth: float) -> float:
        if self.dim != other.dim:
            raise DimensionMismatch("embeddings live in different input dimensions")
        return float(self.weights @ other.evaluate(self.points, bandwidth))


def rkhs_distance(a: Embedding, b: Embedding, kernel: KernelConfig) -> float:
    """``||mu_a - mu_b||`` in the RKHS; tiny negative squared norms are clamped to 0."""
    bw = kernel.resolve(a.points, b.points).bandwidth
    diff = (a - b).merged()
    sq = diff.inner(diff, bw)
    return float(np.sqrt(max(sq, 0.0)))


class _HullDistance:
    """Squared distance from ``lam mu_F + (1 - lam) mu_H`` to the convex hull of the hull points.

    With ``K = U S U^T`` the hull Gram matrix (eigenvalues below ``eig_floor``
    relative to the largest dropped), the problem becomes a small
    simplex-constrained least squares ``|A alpha - c|^2``, solved exactly by
    Lawson-Hanson NNLS with a heavily weighted sum-to-one row. The returned
    value is the exact objective at the solution, so truncation can only make
    the distance an overestimate.
    """

    def __init__(self, hull: np.ndarray, mix: Embedding, comp: Embedding, bandwidth: float, cfg: MpeConfig):
        self.K = rbf_gram(hull, hull, bandwidth)
        self.b_mix = mix.evaluate(hull, bandwidth)
        self.b_comp = comp.evaluate(hull, bandwidth)
        self.c_mm = mix.inner(mix, bandwidth)
        self.c_mc = mix.inner(comp, bandwidth)
        self.c_cc = comp.inner(comp, bandwidth)
        evals, evecs = np.linalg.eigh(self.K)
        keep = evals > cfg.eig_floor * evals[-1]
        s, u = evals[keep], evecs[:, keep]
        self.A = np.sqrt(s)[:, None] * u.T
        self.proj = u.T / np.sqrt(s)[:, None]
        self.sum_weight = cfg.sum_weight * np.sqrt(evals[-1])
        self.cfg = cfg

    def solve(self, lam: float) -> tuple[float, np.ndarray]:
        b = lam * self.b_mix + (1.0 - lam) * self.b_comp
        const = lam * lam * self.c_mm + 2.0 * lam * (1.0 - lam) * self.c_mc + (1.0 - lam) ** 2 * self.c_cc
        c = self.proj @ b
        m = self.A.shape[1]
        design = np.vstack([self.A, np.full((1, m), self.sum_weight)])
        target = np.concatenate([c, [self.sum_weight]])
        try:
            alpha, _ = nnls(design, target, maxiter=self.cfg.max_iter)
        except RuntimeError as exc:
            raise NonConvergence(f"hull projection failed at lam={lam:.3f}: {exc}") from None
        total = alpha.sum()
        if not np.isfinite(total) or total <= 0:
            raise NonConvergence(f"hull projection returned no feasible weights at lam={lam:.3f}")
        alpha = alpha / total
        value = float(alpha @ (self.K @ alpha) - 2.0 * alpha @ b + const)
        return max(value, 0.0), alpha

    def __call__(self, lam: float) -> float:
        return self.solve(lam)[0]


@dataclass
class MpeResult:
    kappa: float
    kappa_grid: np.ndarray
    distances: np.ndarray
    bandwidth: float
    noise_scale: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "bandwidth": self.bandwidth,
            "noise_scale": self.noise_scale,
            "kappa_grid": self.kappa_grid.tolist(),
            "distances": self.distances.tolist(),
        }


def _as_embedding(x) -> Embedding:
    if isinstance(x, Embedding):
        return x
    return Embedding.mean_of(x)


def mpe_curve(mix, comp, kernel: KernelConfig, cfg: MpeConfig | None = None) -> MpeResult:
    """Distance curve and the gradient-threshold estimate of the proportion of ``comp`` in ``mix``.

    ``mix`` is an array of samples (its points also span the hull); ``comp``
    is an array of samples or an :class:`Embedding` (possibly signed).
    """
    cfg = cfg or MpeConfig()
    mix = np.atleast_2d(np.asarray(mix, dtype=np.float64))
    if mix.shape[0] == 0:
        raise EmptySampleSet("mixture sample is empty")
    comp_emb = _as_embedding(comp)
    if comp_emb.dim != mix.shape[1]:
        raise DimensionMismatch(f"mixture has dimension {mix.shape[1]}, component {comp_emb.dim}")
    pts = [mix] + ([comp] if not isinstance(comp, Embedding) else [comp_emb.points])
    kernel = kernel.resolve(*pts)
    bw = float(kernel.bandwidth)

    hull = mix
    if mix.shape[0] > cfg.hull_points:
        idx = make_rng(kernel.seed, "prior_estimation", "hull").choice(mix.shape[0], cfg.hull_points, replace=False)
        hull = mix[np.sort(idx)]
    mix_emb = Embedding.mean_of(mix)
    dist = _HullDistance(hull, mix_emb, comp_emb, bw, cfg)

    n_grid = int(round(1.0 / cfg.grid_step)) - 1
    kappas = np.round(cfg.grid_step * np.arange(1, n_grid + 1), 10)
    lams = 1.0 / (1.0 - kappas)
    d = np.sqrt([dist(lam) for lam in lams])
    noise = float(np.sqrt(np.sum(mix_emb.weights**2) + np.sum(comp_emb.weights**2)))
    kappa = _threshold_estimate(kappas, lams, d, cfg.slope_threshold, cfg.noise_multiplier * noise, cfg.persistence)
    return MpeResult(kappa, kappas, d, bw, noise)


def _threshold_estimate(
    kappas: np.ndarray,
    lams: np.ndarray,
    d: np.ndarray,
    threshold: float,
    noise_floor: float = 0.0,
    persistence: int = 1,
) -> float:
    slopes = np.diff(d) / np.diff(lams)
    # reference slope: past the true proportion the curve is close to linear in lam
    ref = float(np.median(slopes[-max(5, len(slopes) // 10) :]))
    if ref <= noise_floor:
        # the curve never rises above sampling noise: the component explains the whole mixture
        return 1.0
    cut = max(threshold * ref, noise_floor)
    steep = slopes >= cut
    for j in range(len(slopes)):
        if steep[j : j + persistence].all():
            if j == 0 and d[0] >= cut * (lams[0] - 1.0):
                return 0.0
            return float(kappas[j])
    return 1.0


def estimate_mixture_proportion(mix, comp, kernel: KernelConfig | None = None, cfg: MpeConfig | None = None) -> float:
    """Largest ``kappa`` with ``mix ~ kappa comp + (1 - kappa) G``; always in [0, 1]."""
    return float(np.clip(mpe_curve(mix, comp, kernel or KernelConfig(), cfg).kappa, 0.0, 1.0))


@dataclass
class PriorEstimate:
    """Clamped priors ready for training plus raw estimates and curves for diagnostics."""

    theta: PriorMatrix
    raw: dict
    curves: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.to_dict(),
            "raw": self.raw,
            "curves": {k: v.to_dict() for k, v in self.curves.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def estimate_puac_priors_full(
    data: PuacDataset, kernel: KernelConfig | None = None, cfg: MpeConfig | None = None
) -> PriorEstimate:
    """Estimate ``theta_u^p``, ``theta_a^p`` and ``theta_a^n`` from the bags.

    One bandwidth, resolved on the pooled bags, is shared by all three curves.
    """
    kernel = kernel or KernelConfig()
    for bag in data.bags:
        if len(bag) == 0:
            raise EmptySampleSet(f"{bag.source.value} bag is empty")
    kernel = kernel.resolve(data.pos.x, data.unl.x, data.aug.x)
    cur_u = mpe_curve(data.unl.x, data.pos.x, kernel, cfg)
    u_p = float(np.clip(cur_u.kappa, 0.0, 1.0))
    u_n = 1.0 - u_p
    if u_n <= DEGENERACY_TOL:
        raise DegeneratePrior(f"estimated theta[unl][p] = {u_p:.3f}: the unlabeled bag looks purely positive")
    cur_ap = mpe_curve(data.aug.x, data.pos.x, kernel, cfg)
    pseudo_neg = (Embedding.mean_of(data.unl.x) - Embedding.mean_of(data.pos.x) * u_p) * (1.0 / u_n)
    cur_an = mpe_curve(data.aug.x, pseudo_neg, kernel, cfg)
    a_p = float(np.clip(cur_ap.kappa, 0.0, 1.0))
    a_n = float(np.clip(cur_an.kappa, 0.0, 1.0))
    raw = {"u_p": u_p, "a_p": a_p, "a_n": a_n, "bandwidth": float(kernel.bandwidth)}
    if a_p + a_n > 1.0:
        s = a_p + a_n
        a_p, a_n = a_p / s, a_n / s
    theta = validate_priors(
        [[1.0, 0.0, 0.0], [u_p, u_n, 0.0], [a_p, a_n, max(0.0, 1.0 - a_p - a_n)]], allow_degenerate=True
    )
    return PriorEstimate(theta, raw, {"u_p": cur_u, "a_p": cur_ap, "a_n": cur_an})


def estimate_puac_priors(data: PuacDataset, kernel: KernelConfig | None = None, cfg: MpeConfig | None = None) -> PriorMatrix:
    return estimate_puac_priors_full(data, kernel, cfg).theta
