"""Domain types shared across the package.

Labels, sampling bags, the 3x3 mixture prior matrix, pooled class priors,
datasets and the run configuration. Everything here is immutable once built.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegeneratePrior, DimensionMismatch, EmptyBag, StructuralViolation

STRUCTURAL_TOL = 1e-9
DEGENERACY_TOL = 1e-9


class ClassLabel(enum.IntEnum):
    """True class. The integer value is the ordinal code used by the absolute loss."""

    P = 1
    N = 2
    A = 3

    @property
    def index(self) -> int:
        """Zero-based column index (P=0, N=1, A=2)."""
        return int(self) - 1

    @classmethod
    def from_index(cls, i: int) -> "ClassLabel":
        return cls(int(i) + 1)

    @classmethod
    def from_tag(cls, tag: str) -> "ClassLabel":
        return cls[tag.strip().upper()]

    @property
    def tag(self) -> str:
        return self.name.lower()


LABELS = (ClassLabel.P, ClassLabel.N, ClassLabel.A)


class SourceBag(enum.Enum):
    """Which marginal density a training sample was drawn from."""

    POS = "pos"
    UNL = "unl"
    AUG = "aug"

    @property
    def index(self) -> int:
        return _BAG_INDEX[self]


_BAG_INDEX = {SourceBag.POS: 0, SourceBag.UNL: 1, SourceBag.AUG: 2}
BAGS = (SourceBag.POS, SourceBag.UNL, SourceBag.AUG)


@dataclass(frozen=True)
class PriorMatrix:
    """Class proportions inside each sampling bag.

    ``rows[s][c]`` is the share of true class ``c`` (P, N, A) in bag ``s``
    (Pos, Unl, Aug). Build it with :func:`validate_priors`.
    """

    rows: tuple[tuple[float, float, float], tuple[float, float, float], tuple[float, float, float]]

    @property
    def array(self) -> np.ndarray:
        return np.array(self.rows, dtype=np.float64)

    @property
    def p_p(self) -> float:
        return self.rows[0][0]

    @property
    def u_p(self) -> float:
        return self.rows[1][0]

    @property
    def u_n(self) -> float:
        return self.rows[1][1]

    @property
    def a_p(self) -> float:
        return self.rows[2][0]

    @property
    def a_n(self) -> float:
        return self.rows[2][1]

    @property
    def a_a(self) -> float:
        return self.rows[2][2]

    @property
    def is_degenerate(self) -> bool:
        return self.u_n <= DEGENERACY_TOL or self.a_a <= DEGENERACY_TOL

    def row(self, bag: SourceBag) -> tuple[float, float, float]:
        return self.rows[bag.index]

    def to_dict(self) -> dict:
        return {"pos": list(self.rows[0]), "unl": list(self.rows[1]), "aug": list(self.rows[2])}

    @classmethod
    def from_free(cls, u_p: float, a_p: float, a_n: float, *, allow_degenerate: bool = False) -> "PriorMatrix":
        """Build from the three free priors; complements are filled in."""
        return validate_priors(
            [[1.0, 0.0, 0.0], [u_p, 1.0 - u_p, 0.0], [a_p, a_n, 1.0 - a_p - a_n]],
            allow_degenerate=allow_degenerate,
        )


def validate_priors(theta, *, allow_degenerate: bool = False) -> PriorMatrix:
    """Check a raw 3x3 prior matrix against the mixture constraints.

    Rows are (Pos, Unl, Aug), columns (P, N, A). The positive bag must be pure,
    the unlabeled bag may not contain the augmented class, and each row must
    sum to one (all within ``1e-9``). Rows are renormalized so that they sum
    to exactly one.

    Raises
    ------
    StructuralViolation
        Naming the first violated constraint.
    DegeneratePrior
        When ``theta_u^n`` or ``theta_a^a`` is zero, unless ``allow_degenerate``.
        Both appear as denominators in the rewrite coefficients; in those
        limits the problem reduces to ordinary PU learning.
    """
    if isinstance(theta, PriorMatrix):
        theta = theta.rows
    arr = np.asarray(theta, dtype=np.float64)
    if arr.shape != (3, 3):
        raise StructuralViolation(f"prior matrix must be 3x3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise StructuralViolation("prior matrix has non-finite entries")
    tol = STRUCTURAL_TOL
    names = ("pos", "unl", "aug")
    for s in range(3):
        for c in range(3):
            if arr[s, c] < -tol or arr[s, c] > 1 + tol:
                raise StructuralViolation(f"theta[{names[s]}][{'pna'[c]}] = {arr[s, c]} is outside [0, 1]")
    if abs(arr[0, 0] - 1.0) > tol or abs(arr[0, 1]) > tol or abs(arr[0, 2]) > tol:
        raise StructuralViolation("positive bag must be pure: theta[pos] = (1, 0, 0)")
    if abs(arr[1, 2]) > tol:
        raise StructuralViolation("unlabeled bag has no augmented class: theta[unl][a] must be 0")
    if abs(arr[1, 0] + arr[1, 1] - 1.0) > tol:
        raise StructuralViolation("theta[unl][p] + theta[unl][n] must equal 1")
    if abs(arr[2].sum() - 1.0) > tol:
        raise StructuralViolation("theta[aug] must sum to 1")

    arr = np.clip(arr, 0.0, 1.0)
    u_p = float(arr[1, 0])
    a_p, a_n = float(arr[2, 0]), float(arr[2, 1])
    scale = a_p + a_n + float(arr[2, 2])
    if abs(scale - 1.0) > 8 * np.finfo(np.float64).eps:
        # leave already-normalized rows untouched so validation is idempotent
        a_p, a_n = a_p / scale, a_n / scale
    rows = (
        (1.0, 0.0, 0.0),
        (u_p, 1.0 - u_p, 0.0),
        (a_p, a_n, max(0.0, 1.0 - a_p - a_n)),
    )
    out = PriorMatrix(rows)
    if not allow_degenerate:
        if out.u_n <= DEGENERACY_TOL:
            raise DegeneratePrior(
                "theta[unl][n] = 0: the unlabeled bag holds no negatives, so the task reduces to plain PU learning"
            )
        if out.a_a <= DEGENERACY_TOL:
            raise DegeneratePrior(
                "theta[aug][a] = 0: the augmented bag holds no augmented class, so the task reduces to plain PU learning"
            )
    return out


@dataclass(frozen=True)
class AggregatedPriors:
    """Class priors of the pooled training distribution (or of a test distribution)."""

    p: float
    n: float
    a: float

    def __post_init__(self):
        vals = (self.p, self.n, self.a)
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise StructuralViolation(f"class priors must be nonnegative, got {vals}")
        if abs(sum(vals) - 1.0) > 1e-12:
            raise StructuralViolation(f"class priors must sum to 1, got {sum(vals)!r}")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.p, self.n, self.a], dtype=np.float64)

    def __getitem__(self, label: ClassLabel) -> float:
        return (self.p, self.n, self.a)[ClassLabel(label).index]

    @classmethod
    def normalized(cls, values: Sequence[float]) -> "AggregatedPriors":
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (3,) or np.any(v < 0) or v.sum() <= 0:
            raise StructuralViolation(f"cannot normalize class priors {values!r}")
        v = v / v.sum()
        # last entry absorbs rounding so the sum is exactly one
        return cls(float(v[0]), float(v[1]), float(max(0.0, 1.0 - v[0] - v[1])))

    def to_dict(self) -> dict:
        return {"p": self.p, "n": self.n, "a": self.a}


def aggregate_priors(theta: PriorMatrix, n_p: int, n_u: int, n_a: int) -> AggregatedPriors:
    """Class priors of the pooled bag D_p + D_u + D_a.

    The pooled distribution is the count-weighted mixture of the three
    sampling distributions, so ``pi_c = sum_s (n_s / n) * theta[s][c]``.
    """
    counts = np.array([n_p, n_u, n_a], dtype=np.float64)
    if np.any(counts < 1):
        raise ValueError(f"bag counts must be >= 1, got {(n_p, n_u, n_a)}")
    w = counts / counts.sum()
    return AggregatedPriors.normalized(w @ theta.array)


@dataclass(frozen=True)
class Bag:
    """Samples drawn from one sampling distribution.

    ``labels`` carries the latent true class codes (1/2/3) when known. Training
    code never reads them; they exist for oracle checks only.
    """

    x: np.ndarray
    source: SourceBag
    labels: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionMismatch(f"bag features must be 2-D, got shape {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (x.shape[0],):
                raise DimensionMismatch("labels must have one entry per sample")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class LabeledSet:
    """Fully labeled samples (test or oracle data); ``y`` holds codes 1/2/3."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise DimensionMismatch(f"labeled set shapes disagree: x {x.shape}, y {y.shape}")
        if y.size and not np.all(np.isin(y, (1, 2, 3))):
            raise ValueError("labels must be encoded as 1 (p), 2 (n) or 3 (a)")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.x.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.array([(self.y == c).sum() for c in (1, 2, 3)], dtype=np.int64)


@dataclass(frozen=True)
class PuacDataset:
    """The three training bags plus an optional labeled test set."""

    pos: Bag
    unl: Bag
    aug: Bag
    test: LabeledSet | None = None

    def __post_init__(self):
        for bag, src in zip(self.bags, BAGS):
            if bag.source is not src:
                raise ValueError(f"expected a {src.value} bag, got {bag.source.value}")
        dims = {b.dim for b in self.bags}
        if self.test is not None:
            dims.add(self.test.x.shape[1])
        if len(dims) != 1:
            raise DimensionMismatch(f"bags disagree on feature dimension: {sorted(dims)}")

    @property
    def bags(self) -> tuple[Bag, Bag, Bag]:
        return (self.pos, self.unl, self.aug)

    @property
    def dim(self) -> int:
        return self.pos.dim

    @property
    def counts(self) -> tuple[int, int, int]:
        return (len(self.pos), len(self.unl), len(self.aug))

    def bag(self, source: SourceBag) -> Bag:
        return self.bags[source.index]

    def require_nonempty(self) -> None:
        for b in self.bags:
            if len(b) == 0:
                raise EmptyBag(f"{b.source.value} bag is empty")

    def with_test(self, test: LabeledSet | None) -> "PuacDataset":
        return PuacDataset(self.pos, self.unl, self.aug, test)


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a training run.

    Identical configs on identical data give bit-identical results.
    """

    seed: int = 0
    loss_kind: str = "ovr"  # "ovr" (squared OVR margin) or "ordinal" (absolute)
    surrogate: str = "squared"
    model_kind: str = "mlp"  # "linear" or "mlp"
    hidden_width: int = 32
    optimizer: str = "adadelta"  # "adadelta" or "sgd"
    learning_rate: float = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    epochs: int = 100
    batch_size: int = 256
    val_fraction: float = 0.0
    patience: int = 0

    def __post_init__(self):
        if self.loss_kind not in ("ovr", "ordinal"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.model_kind not in ("linear", "mlp"):
            raise ValueError(f"unknown model_kind {self.model_kind!r}")
        if self.optimizer not in ("adadelta", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.rho < 1.0 or self.eps <= 0:
            raise ValueError("adadelta needs rho in (0, 1) and eps > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")

    @property
    def output_dim(self) -> int:
        return 3 if self.loss_kind == "ovr" else 1


def make_rng(seed: int, *path: str) -> np.random.Generator:
    """Generator for a named stream derived from the run seed.

    Each path component is hashed into the spawn key, so streams for different
    modules (``make_rng(s, "datagen", "unl")``) are independent and stable.
    """
    key = tuple(zlib.crc32(p.encode("utf-8")) for p in path)
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
