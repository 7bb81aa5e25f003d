"""Loss-ranked example selection for the ascent and descent steps.

Support selection keeps the highest-loss examples of a mini-batch for the
sharpness (ascent) gradient. Redundancy elimination keeps the highest-loss
examples for the descent gradient, using the loss as a cheap stand-in for
the per-example gradient magnitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import Batch, NetworkSpec, forward, per_example_losses

__all__ = ["SelectionConfig", "keep_count", "top_j_indices", "select_support", "eliminate_redundant"]

OUTER_SOURCES = ("support", "batch")


@dataclass(frozen=True)
class SelectionConfig:
    inner_frac: float = 0.4
    outer_frac: float = 0.4
    # which set the descent subset is drawn from
    outer_from: str = "support"

    def __post_init__(self):
        for name in ("inner_frac", "outer_frac"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {val}")
        if self.outer_from not in OUTER_SOURCES:
            raise ValueError(f"outer_from must be one of {OUTER_SOURCES}")


def keep_count(frac: float, n: int) -> int:
    """ceil(frac * n), at least 1."""
    return max(1, math.ceil(round(frac * n, 9)))


def top_j_indices(losses, j: int) -> np.ndarray:
    """Indices of the j largest values, lower index first on ties, sorted ascending."""
    losses = np.asarray(losses, dtype=np.float64)
    n = losses.shape[0]
    if not 1 <= j <= n:
        raise ValueError(f"j must lie in [1, {n}], got {j}")
    order = np.argsort(-losses, kind="stable")
    return np.sort(order[:j])


def _keep_top(spec, params, mask, batch, frac, losses=None):
    if len(batch) == 0:
        raise ValueError("empty batch")
    if frac >= 1.0:
        return batch
    if losses is None:
        losses = per_example_losses(forward(spec, params, mask, batch), batch.labels)
    return batch.subset(top_j_indices(losses, keep_count(frac, len(batch))))


def select_support(spec: NetworkSpec, params, mask, batch: Batch, cfg: SelectionConfig,
                   losses=None) -> Batch:
    """Top ``ceil(inner_frac * n)`` examples by loss, in their original order.

    Pass precomputed per-example ``losses`` to skip the forward pass.
    """
    return _keep_top(spec, params, mask, batch, cfg.inner_frac, losses)


def eliminate_redundant(spec: NetworkSpec, params, mask, batch: Batch, cfg: SelectionConfig,
                        losses=None) -> Batch:
    """Top ``ceil(outer_frac * n)`` examples by loss, in their original order."""
    return _keep_top(spec, params, mask, batch, cfg.outer_frac, losses)
