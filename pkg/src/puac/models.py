"""Small differentiable scorers with hand-written backpropagation.

Two architectures: an affine map and a one-hidden-layer rectifier network.
Output width is 3 for one-versus-rest scores or 1 for the ordinal score.

Checkpoint layout (JSON, UTF-8)::

    {
      "format": "puac-scorer",
      "version": 1,
      "kind": "linear" | "mlp",
      "input_dim": d,
      "output_dim": 3 | 1,
      "hidden_width": h | null,
      "params": [{"name": "W1", "shape": [h, d], "data": [... row-major ...]}, ...]
    }

Parameter order is ``W, b`` for linear models and ``W1, b1, W2, b2`` for the
network. Floats are written with ``repr`` precision, so loading a checkpoint
reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch
from .types import ClassLabel

_PARAM_NAMES = {"linear": ("W", "b"), "mlp": ("W1", "b1", "W2", "b2")}


@dataclass(frozen=True)
class Scorer:
    kind: str
    input_dim: int
    output_dim: int
    params: tuple[np.ndarray, ...]
    hidden_width: int | None = None

    def __post_init__(self):
        if self.kind not in _PARAM_NAMES:
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.output_dim not in (1, 3):
            raise ValueError("output_dim must be 3 (OVR) or 1 (ordinal)")
        shapes = self.param_shapes()
        params = tuple(np.array(p, dtype=np.float64) for p in self.params)
        if tuple(p.shape for p in params) != shapes:
            raise DimensionMismatch(
                f"parameter shapes {[p.shape for p in params]} do not match expected {list(shapes)}"
            )
        for p in params:
            p.setflags(write=False)
        object.__setattr__(self, "params", params)

    def param_shapes(self) -> tuple[tuple[int, ...], ...]:
        d, k = self.input_dim, self.output_dim
        if self.kind == "linear":
            return ((k, d), (k,))
        h = self.hidden_width
        return ((h, d), (h,), (k, h), (k,))

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes())

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def with_flat(self, vec: np.ndarray) -> "Scorer":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise DimensionMismatch(f"expected {self.n_params} parameters, got {vec.shape}")
        out, i = [], 0
        for shape in self.param_shapes():
            size = int(np.prod(shape))
            out.append(vec[i : i + size].reshape(shape))
            i += size
        return Scorer(self.kind, self.input_dim, self.output_dim, tuple(out), self.hidden_width)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected inputs of dimension {self.input_dim}, got shape {x.shape}")
        return x

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        """Batch scores ``(n, output_dim)`` plus the cache needed by :meth:`backward`."""
        x = self._check_input(x)
        if self.kind == "linear":
            w, b = self.params
            return x @ w.T + b, (x,)
        w1, b1, w2, b2 = self.params
        pre = x @ w1.T + b1
        hidden = np.maximum(pre, 0.0)
        return hidden @ w2.T + b2, (x, pre, hidden)

    def score(self, x: np.ndarray) -> np.ndarray:
        """Scores for one sample (1-D input) or a batch (2-D input)."""
        single = np.ndim(x) == 1
        out, _ = self.forward(x)
        return out[0] if single else out

    def backward(self, cache: tuple, upstream: np.ndarray) -> np.ndarray:
        """Flat parameter gradient of ``sum_i <upstream_i, f(x_i)>``."""
        g = np.asarray(upstream, dtype=np.float64)
        if g.ndim == 1:
            g = g.reshape(-1, self.output_dim) if self.output_dim == 1 else g[None, :]
        x = cache[0]
        if g.shape != (x.shape[0], self.output_dim):
            raise DimensionMismatch(f"upstream gradient shape {g.shape} does not match {(x.shape[0], self.output_dim)}")
        if self.kind == "linear":
            return np.concatenate([(g.T @ x).ravel(), g.sum(axis=0)])
        _, pre, hidden = cache
        w2 = self.params[2]
        d_hidden = (g @ w2) * (pre > 0)
        return np.concatenate(
            [(d_hidden.T @ x).ravel(), d_hidden.sum(axis=0), (g.T @ hidden).ravel(), g.sum(axis=0)]
        )

    def gradient(self, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Convenience wrapper: forward pass on ``x`` then :meth:`backward`."""
        _, cache = self.forward(x)
        return self.backward(cache, upstream)

    def to_json(self) -> str:
        names = _PARAM_NAMES[self.kind]
        doc = {
            "format": "puac-scorer",
            "version": 1,
            "kind": self.kind,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_width": self.hidden_width,
            "params": [
                {"name": n, "shape": list(p.shape), "data": [float(v) for v in p.ravel()]}
                for n, p in zip(names, self.params)
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Scorer":
        doc = json.loads(text)
        if doc.get("format") != "puac-scorer":
            raise ValueError("not a puac scorer checkpoint")
        params = tuple(np.array(p["data"], dtype=np.float64).reshape(p["shape"]) for p in doc["params"])
        return cls(doc["kind"], int(doc["input_dim"]), int(doc["output_dim"]), params, doc.get("hidden_width"))


def init_scorer(
    kind: str,
    input_dim: int,
    output_dim: int,
    rng: np.random.Generator,
    hidden_width: int | None = None,
) -> Scorer:
    """Uniform initialization in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` per layer."""
    if kind == "mlp":
        if not hidden_width or hidden_width < 1:
            raise ValueError("mlp scorer needs hidden_width >= 1")
        layers = [(hidden_width, input_dim), (output_dim, hidden_width)]
    else:
        hidden_width = None
        layers = [(output_dim, input_dim)]
    params = []
    for fan_out, fan_in in layers:
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        params.append(rng.uniform(-bound, bound, size=fan_out))
    return Scorer(kind, input_dim, output_dim, tuple(params), hidden_width)


def save_scorer(model: Scorer, path: str | Path) -> None:
    Path(path).write_text(model.to_json(), encoding="utf-8")


def load_scorer(path: str | Path) -> Scorer:
    return Scorer.from_json(Path(path).read_text(encoding="utf-8"))


def predict_ovr(scores) -> np.ndarray | ClassLabel:
    """Label of the largest OVR score; ties go to the earliest of P, N, A."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim == 1:
        return ClassLabel.from_index(int(np.argmax(s)))
    # np.argmax returns the first maximal index, which is the P < N < A rule
    return np.argmax(s, axis=1).astype(np.int64) + 1


def predict_ordinal(f_o) -> np.ndarray | ClassLabel:
    """Nearest ordinal code; midpoints 1.5 and 2.5 go to the smaller label."""
    f = np.asarray(f_o, dtype=np.float64)
    dist = np.abs(f.reshape(-1, 1) - np.array([1.0, 2.0, 3.0]))
    codes = np.argmin(dist, axis=1).astype(np.int64) + 1
    if f.ndim == 0:
        return ClassLabel(int(codes[0]))
    return codes


def predict(model: Scorer, x: np.ndarray) -> np.ndarray:
    """Predicted label codes for a batch, using the rule matching ``output_dim``."""
    scores, _ = model.forward(x)
    if model.output_dim == 3:
        return predict_ovr(scores)
    return predict_ordinal(scores[:, 0])
