"""Sharpness-aware gradients and a random-direction sharpness probe."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .nn import Batch, NetworkSpec, batch_loss, grad

__all__ = ["SamConfig", "perturbation", "sam_direction", "sam_gradient", "sharpness_probe"]


@dataclass(frozen=True)
class SamConfig:
    rho: float = 0.05
    grad_eps: float = 1e-12

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")


def perturbation(g, rho: float, grad_eps: float = 1e-12) -> tuple[np.ndarray, bool]:
    """Ascent step ``rho * g / ||g||``.

    Returns ``(epsilon, degenerate)``; when ``||g|| < grad_eps`` epsilon is
    zero and ``degenerate`` is True.
    """
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    if norm < grad_eps:
        return np.zeros_like(g), True
    return (rho / norm) * g, False


def sam_direction(grad_fn: Callable[[np.ndarray], np.ndarray], theta, rho: float,
                  grad_eps: float = 1e-12, outer_grad_fn=None, restrict=None) -> np.ndarray:
    """First-order SAM gradient for any differentiable objective.

    ``grad_fn`` gives the ascent gradient; ``outer_grad_fn`` (defaults to
    ``grad_fn``) is evaluated at ``theta + epsilon`` with epsilon held fixed.
    ``restrict`` limits the ascent to a subset of coordinates.
    """
    theta = np.asarray(theta, dtype=np.float64)
    outer_grad_fn = grad_fn if outer_grad_fn is None else outer_grad_fn
    if rho == 0:
        return outer_grad_fn(theta)
    g = grad_fn(theta)
    if restrict is not None:
        g = np.where(restrict, g, 0.0)
    eps, _ = perturbation(g, rho, grad_eps)
    return outer_grad_fn(theta + eps)


def sam_gradient(spec: NetworkSpec, params, mask, support_batch: Batch, rho: float,
                 outer_batch: Batch | None = None, trainable=None,
                 grad_eps: float = 1e-12) -> np.ndarray:
    """``grad(theta + eps; outer)`` with ``eps`` from the support batch.

    ``outer_batch`` defaults to the support batch. When ``trainable`` is given,
    both the perturbation and the returned gradient are restricted to it.
    """
    if len(support_batch) == 0:
        raise ValueError("support batch is empty")
    outer = support_batch if outer_batch is None else outer_batch
    out = sam_direction(
        lambda p: grad(spec, p, mask, support_batch),
        params, rho, grad_eps,
        outer_grad_fn=lambda p: grad(spec, p, mask, outer),
        restrict=trainable,
    )
    if trainable is not None:
        out = np.where(trainable, out, 0.0)
    return out


def sharpness_probe(spec: NetworkSpec, params, mask, batch: Batch, rho: float, n_dirs: int,
                    seed: int, directions_mask=None) -> float:
    """Largest loss increase over ``n_dirs`` random directions of length ``rho``.

    Directions are uniform on the unit sphere of the unmasked coordinates
    (or of ``directions_mask`` when given).
    """
    if n_dirs < 1:
        raise ValueError("n_dirs must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    support = mask if directions_mask is None else np.asarray(directions_mask, dtype=bool) & mask
    base = batch_loss(spec, params, mask, batch)
    if rho == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    idx = np.flatnonzero(support)
    best = -np.inf
    for _ in range(n_dirs):
        u = rng.standard_normal(idx.size)
        u /= np.linalg.norm(u)
        shifted = np.array(params, dtype=np.float64, copy=True)
        shifted[idx] += rho * u
        best = max(best, batch_loss(spec, shifted, mask, batch) - base)
    return float(best)
