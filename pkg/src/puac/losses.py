"""Binary margin surrogates, the OVR margin loss, the ordinal absolute loss and 0-1 loss.

All functions are vectorized: scores may be a single vector or a batch with
samples along the first axis. Every loss returns its value together with the
exact derivative (a subgradient for the absolute loss).
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.special import expit

from .types import ClassLabel


class Surrogate(enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"
    SIGMOID = "sigmoid"

    @classmethod
    def parse(cls, value: "Surrogate | str") -> "Surrogate":
        if isinstance(value, Surrogate):
            return value
        return cls(str(value).lower())


def phi(surrogate: Surrogate | str, z):
    """Evaluate a margin surrogate and its derivative at ``z``.

    squared:  (1 - z)^2
    logistic: log(1 + exp(-z))
    sigmoid:  1 / (1 + exp(z))

    Returns
    -------
    value, derivative : ndarray (or float for scalar input)
    """
    s = Surrogate.parse(surrogate)
    z = np.asarray(z, dtype=np.float64)
    if s is Surrogate.SQUARED:
        value = (1.0 - z) ** 2
        deriv = -2.0 * (1.0 - z)
    elif s is Surrogate.LOGISTIC:
        value = np.logaddexp(0.0, -z)
        deriv = -expit(-z)
    else:
        sig = expit(-z)
        value = sig
        deriv = -sig * (1.0 - sig)
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def ovr_losses_all_classes(scores, surrogate: Surrogate | str = Surrogate.SQUARED) -> np.ndarray:
    """OVR margin loss of every sample against each of the three candidate labels.

    Returns an ``(n, 3)`` array whose column ``c`` is ``l(f(x), c)``.
    """
    f = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    a, _ = phi(surrogate, f)
    b, _ = phi(surrogate, -f)
    a, b = np.asarray(a), np.asarray(b)
    return b.sum(axis=1, keepdims=True) - b + a


def ovr_weighted_loss(scores, weights, surrogate: Surrogate | str = Surrogate.SQUARED):
    """Signed combination ``sum_c w_c * l(f, c)`` of OVR margin losses.

    ``weights`` has length 3 (shared by all rows) or shape ``(n, 3)``.
    The score gradient has the closed form
    ``w_i * phi'(f_i) - (sum(w) - w_i) * phi'(-f_i)``.

    Returns
    -------
    value : ndarray, shape (n,)
    grad : ndarray, shape (n, 3)
    """
    f = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    w = np.broadcast_to(np.asarray(weights, dtype=np.float64), f.shape)
    a, da = phi(surrogate, f)
    b, db_neg = phi(surrogate, -f)
    a, da, b, db_neg = map(np.asarray, (a, da, b, db_neg))
    total = w.sum(axis=1, keepdims=True)
    value = (w * a).sum(axis=1) + ((total - w) * b).sum(axis=1)
    grad = w * da - (total - w) * db_neg
    return value, grad


def ovr_margin_loss(scores, y, surrogate: Surrogate | str = Surrogate.SQUARED):
    """``phi(f_y) + sum_{i != y} phi(-f_i)`` and its gradient w.r.t. the three scores.

    ``y`` is a :class:`ClassLabel` (or code 1/2/3), scalar or per-row array.
    Scalar input (one score vector, one label) returns ``(float, (3,) array)``.
    """
    f = np.asarray(scores, dtype=np.float64)
    single = f.ndim == 1
    f2 = np.atleast_2d(f)
    codes = np.broadcast_to(np.asarray(y, dtype=np.int64), (f2.shape[0],))
    onehot = np.eye(3)[codes - 1]
    value, grad = ovr_weighted_loss(f2, onehot, surrogate)
    if single:
        return float(value[0]), grad[0]
    return value, grad


def ordinal_abs_loss(f_o, y):
    """``|f_o - code(y)|`` with subgradient ``sign(f_o - code(y))`` (0 at the kink)."""
    f = np.asarray(f_o, dtype=np.float64)
    r = f - np.asarray(y, dtype=np.float64)
    value, grad = np.abs(r), np.sign(r)
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


def ordinal_weighted_loss(f_o, weights):
    """Signed combination ``sum_c w_c * |f_o - c|`` and its subgradient.

    ``f_o`` has shape ``(n,)`` or ``(n, 1)``; returns value ``(n,)`` and
    gradient with the same shape as ``f_o``.
    """
    f = np.asarray(f_o, dtype=np.float64)
    flat = f.reshape(-1, 1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 3)
    r = flat - np.array([1.0, 2.0, 3.0])
    value = (w * np.abs(r)).sum(axis=1)
    grad = (w * np.sign(r)).sum(axis=1)
    return value, grad.reshape(f.shape)


def zero_one(pred, y):
    """Indicator of a wrong prediction; elementwise on arrays."""
    out = np.asarray(pred, dtype=np.int64) != np.asarray(y, dtype=np.int64)
    if out.ndim == 0:
        return int(out)
    return out.astype(np.int64)


__all__ = [
    "ClassLabel",
    "Surrogate",
    "phi",
    "ovr_losses_all_classes",
    "ovr_weighted_loss",
    "ovr_margin_loss",
    "ordinal_abs_loss",
    "ordinal_weighted_loss",
    "zero_one",
]
