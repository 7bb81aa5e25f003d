"""Accuracy and efficiency metrics, and the on-disk run report.

Closed-form metrics (``capacity``) are evaluated in decimal arithmetic on
the shortest repr of their float inputs so that decimal inputs produce the
decimal answer, e.g. ``capacity(0.8, 0.75, 10) == 0.278125``.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Sequence

import numpy as np

from .nn import NetworkSpec

__all__ = [
    "SCHEMA_VERSION",
    "acc_t",
    "training_flops",
    "forward_macs",
    "capacity",
    "MemoryFootprint",
    "memory_footprint",
    "RunReport",
    "emit",
    "load_report",
]

SCHEMA_VERSION = 1
BYTES_PER_VALUE = 8
CURVE_FIELDS = ("task", "epoch", "loss", "accuracy", "sharpness_probe")


def acc_t(R: Sequence[Sequence[float]]) -> float:
    """Mean of the final row of the accuracy matrix."""
    if len(R) == 0 or len(R[-1]) == 0:
        raise ValueError("accuracy matrix is empty")
    last = [float(v) for v in R[-1]]
    return math.fsum(last) / len(last)


def forward_macs(layer_dims: Sequence[int], densities=1.0) -> int:
    """Multiply-adds of one forward pass: sum of in*out*density per layer."""
    shapes = list(zip(layer_dims[:-1], layer_dims[1:]))
    dens = np.broadcast_to(np.asarray(densities, dtype=np.float64), (len(shapes),))
    if np.any(dens < 0) or np.any(dens > 1):
        raise ValueError("densities must lie in [0, 1]")
    return sum(int(round(i * o * d)) for (i, o), d in zip(shapes, dens))


def training_flops(layer_dims: Sequence[int], n_examples: int, n_epochs: int,
                   density_schedule=1.0) -> int:
    """macs * 2 FLOPs/mac * examples * 3 (forward + backward) per epoch, summed.

    ``density_schedule`` is a scalar, one density per layer, or one such
    entry per epoch.
    """
    if n_examples < 0 or n_epochs < 0:
        raise ValueError("counts must be nonnegative")
    sched = density_schedule
    if isinstance(sched, (list, tuple)) and len(sched) == n_epochs and n_epochs > 0 \
            and isinstance(sched[0], (list, tuple, np.ndarray)):
        per_epoch = list(sched)
    else:
        per_epoch = [sched] * n_epochs
    return sum(forward_macs(layer_dims, d) * 2 * n_examples * 3 for d in per_epoch)


def _dec(x) -> Decimal:
    return Decimal(repr(x)) if isinstance(x, float) else Decimal(x)


def capacity(sparsity: float, gamma: float, n_tasks: int) -> float:
    """``(1 - S) + (1 - gamma) * T / 32`` as a fraction."""
    if not 0 <= sparsity <= 1:
        raise ValueError("sparsity must lie in [0, 1]")
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    one = Decimal(1)
    return float((one - _dec(sparsity)) + (one - _dec(gamma)) * Decimal(n_tasks) / Decimal(32))


@dataclass
class MemoryFootprint:
    """Byte estimate. Values are 8-byte floats, masks are bit-packed."""

    params: int
    activations: int
    gradients: int
    masks: int

    @property
    def total(self) -> int:
        return self.params + self.activations + self.gradients + self.masks


def memory_footprint(spec: NetworkSpec, mask_state=None, batch_size: int = 0) -> MemoryFootprint:
    """Parameters + activations + gradients (+ packed masks).

    Activations count one stored value per unit of every layer on a single
    head path (hidden pre- and post-activations share the count: the
    post-activation is recomputable from the pre-activation), times the batch.
    Masks: trainable, frozen and one snapshot per completed task, each
    ``ceil(d / 8)`` bytes.
    """
    if batch_size < 0:
        raise ValueError("batch_size must be >= 0")
    d = spec.size
    units = sum(spec.layer_dims[1:])
    n_masks = 0
    if mask_state is not None:
        n_masks = 2 + len(mask_state.per_task_masks)
    return MemoryFootprint(
        params=d * BYTES_PER_VALUE,
        activations=batch_size * units * BYTES_PER_VALUE,
        gradients=d * BYTES_PER_VALUE,
        masks=n_masks * math.ceil(d / 8),
    )


@dataclass
class RunReport:
    """Result of a task sequence.

    ``R[t][i]`` is the test accuracy on task i after training task t. Only
    deterministic content goes into ``report.json``; wall times travel in
    ``events`` (the JSONL log).
    """

    R: list[list[float]]
    acc_t: float
    flops: int
    capacity_weights_only: float
    capacity_with_masks: float
    memory_bytes: int
    memory_breakdown: dict
    config: dict
    per_task: list[dict] = field(default_factory=list)
    curves: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    status: str = "complete"
    error: str | None = None
    schema_version: int = SCHEMA_VERSION

    def to_json_dict(self) -> dict:
        out = asdict(self)
        out.pop("curves")
        out.pop("events")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def mean_sharpness(self) -> float:
        vals = [t["sharpness"] for t in self.per_task if t.get("sharpness") is not None]
        return float(np.mean(vals)) if vals else float("nan")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit(report: RunReport, path) -> dict[str, Path]:
    """Write ``report.json``, ``events.jsonl`` and ``curves.csv`` into directory ``path``."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    files = {"report": path / "report.json", "events": path / "events.jsonl",
             "curves": path / "curves.csv"}
    _atomic_write(files["report"], report.to_json())

    header = json.dumps({"event": "schema", "schema_version": SCHEMA_VERSION})
    lines = [header] + [json.dumps(e, sort_keys=True) for e in report.events]
    _atomic_write(files["events"], "\n".join(lines) + "\n")

    rows = [f"# schema_version={SCHEMA_VERSION}", ",".join(CURVE_FIELDS)]
    for c in report.curves:
        rows.append(",".join(repr(c[k]) if isinstance(c[k], float) else str(c[k]) for k in CURVE_FIELDS))
    _atomic_write(files["curves"], "\n".join(rows) + "\n")
    return files


def load_report(path) -> RunReport:
    """Inverse of :func:`emit`."""
    path = Path(path)
    data = json.loads((path / "report.json").read_text(encoding="utf-8"))
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {data.get('schema_version')}")
    events = []
    events_file = path / "events.jsonl"
    if events_file.exists():
        for line in events_file.read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            if rec.get("event") != "schema":
                events.append(rec)
    curves = []
    curves_file = path / "curves.csv"
    if curves_file.exists():
        with open(curves_file, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        for row in csv.DictReader(lines):
            curves.append({"task": int(row["task"]), "epoch": int(row["epoch"]),
                           "loss": float(row["loss"]), "accuracy": float(row["accuracy"]),
                           "sharpness_probe": float(row["sharpness_probe"])})
    return RunReport(curves=curves, events=events, **data)
