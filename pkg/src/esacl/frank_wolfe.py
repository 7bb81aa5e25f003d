"""Stochastic Frank-Wolfe over the K-sparse polytope.

The polytope ``C(K, tau)`` is the convex hull of all vectors with exactly K
nonzero entries, each equal to ``+tau`` or ``-tau``; equivalently the
intersection of the L1 ball of radius ``tau * K`` with the L-inf ball of
radius ``tau``. All operations act on the trainable coordinates only; frozen
coordinates are invisible to the constraint and are never written.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["KSparsePolytope", "MomentumState", "lmo", "momentum_update", "sfw_update", "contains"]


@dataclass(frozen=True)
class KSparsePolytope:
    k_frac: float
    tau: float

    def __post_init__(self):
        if not 0.0 < self.k_frac <= 1.0:
            raise ValueError(f"k_frac must lie in (0, 1], got {self.k_frac}")
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    def k_abs(self, d: int) -> int:
        """Absolute K for a trainable dimension ``d``: ceil(k_frac * d), at least 1."""
        # round first so that e.g. 0.05 * 100 does not ceil to 6
        return max(1, math.ceil(round(self.k_frac * d, 9)))


@dataclass
class MomentumState:
    """Accumulated gradient ``m``; ``decay`` = 1 keeps every past gradient."""

    m: np.ndarray
    alpha: float
    decay: float = 1.0

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64)

    @classmethod
    def zeros(cls, d: int, alpha: float, decay: float = 1.0) -> "MomentumState":
        return cls(np.zeros(d), alpha, decay)


def _trainable(trainable, d):
    if trainable is None:
        return np.ones(d, dtype=bool)
    trainable = np.asarray(trainable, dtype=bool)
    if trainable.shape != (d,):
        raise ValueError(f"trainable mask length {trainable.shape} != {d}")
    return trainable


def lmo(m, poly: KSparsePolytope, trainable=None) -> np.ndarray:
    """Vertex of ``C(K, tau)`` minimizing ``<m, v>`` over trainable coordinates.

    The K trainable coordinates with largest ``|m_i|`` get ``-tau * sign(m_i)``
    (sign(0) = +1), everything else 0. Ties go to the lower index.
    """
    m = np.asarray(m, dtype=np.float64)
    trainable = _trainable(trainable, m.shape[0])
    idx = np.flatnonzero(trainable)
    if idx.size == 0:
        raise ValueError("no trainable coordinates")
    k = poly.k_abs(idx.size)
    order = np.argsort(-np.abs(m[idx]), kind="stable")
    top = idx[order[:k]]
    v = np.zeros_like(m)
    v[top] = np.where(m[top] < 0, poly.tau, -poly.tau)
    return v


def momentum_update(state: MomentumState, g) -> MomentumState:
    """``m <- decay * m + alpha * g`` (returns a new state)."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ValueError(f"gradient shape {g.shape} != momentum shape {state.m.shape}")
    m = state.m + state.alpha * g if state.decay == 1.0 else state.decay * state.m + state.alpha * g
    return MomentumState(m, state.alpha, state.decay)


def sfw_update(theta, v, eta: float, trainable=None) -> np.ndarray:
    """Convex step ``theta + eta * (v - theta)`` on trainable coordinates."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    theta = np.asarray(theta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != theta.shape:
        raise ValueError("theta and v differ in shape")
    trainable = _trainable(trainable, theta.shape[0])
    out = theta.copy()
    out[trainable] = (1.0 - eta) * theta[trainable] + eta * v[trainable]
    return out


def contains(poly: KSparsePolytope, theta, trainable=None, tol: float = 1e-9) -> bool:
    """Membership test: L-inf <= tau and L1 <= tau * K over trainable coordinates."""
    theta = np.asarray(theta, dtype=np.float64)
    trainable = _trainable(trainable, theta.shape[0])
    sub = theta[trainable]
    if sub.size == 0:
        return True
    k = poly.k_abs(sub.size)
    return bool(np.max(np.abs(sub)) <= poly.tau + tol and np.sum(np.abs(sub)) <= poly.tau * k + tol)
