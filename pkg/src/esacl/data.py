"""Synthetic task sequences and CSV ingestion.

CSV layout: header ``x0,...,x{d-1},label,task`` plus an optional ``split``
column holding ``train`` or ``test``. Without a split column every row is
used for both training and evaluation.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .nn import Batch

__all__ = [
    "Task",
    "TaskSequence",
    "DataError",
    "CsvFormatError",
    "LabelRangeError",
    "gen_split_gaussians",
    "gen_permuted",
    "load_csv",
    "save_csv",
]

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


class CsvFormatError(DataError):
    """Malformed CSV content; ``line`` is the 1-based file line (header = 1)."""

    def __init__(self, message, line=None, column=None):
        self.line, self.column = line, column
        where = f"line {line}" if line is not None else ""
        if column is not None:
            where += f", column {column!r}"
        super().__init__(f"{where}: {message}" if where else message)


class LabelRangeError(CsvFormatError):
    pass


@dataclass(eq=False)
class Task:
    train: Batch
    test: Batch
    task_id: int
    class_count: int

    def __eq__(self, other):
        if not isinstance(other, Task):
            return NotImplemented
        return (self.task_id == other.task_id and self.class_count == other.class_count
                and self.train == other.train and self.test == other.test)


@dataclass(eq=False)
class TaskSequence:
    tasks: list[Task]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for i, t in enumerate(self.tasks):
            if t.task_id != i:
                raise DataError(f"task ids must be 0..T-1 in order, task {i} has id {t.task_id}")

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    def __eq__(self, other):
        if not isinstance(other, TaskSequence):
            return NotImplemented
        return self.tasks == other.tasks

    @property
    def input_dim(self) -> int:
        return self.tasks[0].train.inputs.shape[1]

    @property
    def class_count(self) -> int:
        return max(t.class_count for t in self.tasks)


def _class_means(rng, classes, dim, separation):
    # orthogonal directions when they fit, otherwise independent ones
    if classes <= dim:
        q, r = np.linalg.qr(rng.standard_normal((dim, classes)))
        dirs = (q * np.sign(np.diag(r))).T
    else:
        dirs = rng.standard_normal((classes, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return separation * dirs


def gen_split_gaussians(n_tasks: int, classes_per_task: int, dim: int, n_per_class: int,
                        separation: float, seed: int) -> TaskSequence:
    """Each task: ``classes_per_task`` unit-covariance blobs, 80/20 train/test split.

    Class means sit on the sphere of radius ``separation``; they are mutually
    orthogonal whenever ``classes_per_task <= dim``.
    """
    for name, val in (("n_tasks", n_tasks), ("classes_per_task", classes_per_task),
                      ("dim", dim), ("n_per_class", n_per_class)):
        if val < 1:
            raise DataError(f"{name} must be >= 1")
    if separation < 0:
        raise DataError("separation must be >= 0")
    rng = np.random.default_rng(seed)
    tasks = []
    for t in range(n_tasks):
        means = _class_means(rng, classes_per_task, dim, separation)
        x = np.concatenate([m + rng.standard_normal((n_per_class, dim)) for m in means])
        y = np.repeat(np.arange(classes_per_task), n_per_class)
        perm = rng.permutation(y.shape[0])
        x, y = x[perm], y[perm]
        n = y.shape[0]
        n_train = n if n == 1 else min(n - 1, max(1, int(round(0.8 * n))))
        tasks.append(Task(Batch(x[:n_train], y[:n_train], t), Batch(x[n_train:], y[n_train:], t),
                          t, classes_per_task))
    meta = {"generator": "split_gaussians", "seed": seed, "n_tasks": n_tasks,
            "classes_per_task": classes_per_task, "dim": dim, "n_per_class": n_per_class,
            "separation": separation}
    return TaskSequence(tasks, meta)


def gen_permuted(base_task: Task, n_tasks: int, seed: int) -> TaskSequence:
    """Task 0 is the base task; task t applies a fixed random input permutation."""
    if n_tasks < 1:
        raise DataError("n_tasks must be >= 1")
    rng = np.random.default_rng(seed)
    dim = base_task.train.inputs.shape[1]
    perms = [np.arange(dim)] + [rng.permutation(dim) for _ in range(n_tasks - 1)]
    tasks = [
        Task(Batch(base_task.train.inputs[:, p], base_task.train.labels, t),
             Batch(base_task.test.inputs[:, p], base_task.test.labels, t),
             t, base_task.class_count)
        for t, p in enumerate(perms)
    ]
    meta = {"generator": "permuted", "seed": seed, "n_tasks": n_tasks,
            "permutations": [p.tolist() for p in perms]}
    return TaskSequence(tasks, meta)


def save_csv(seq: TaskSequence, path) -> None:
    """Write a sequence with a ``split`` column; floats use round-trip repr."""
    path = Path(path)
    dim = seq.input_dim
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(dim)] + ["label", "task", "split"])
        for task in seq:
            for split, b in (("train", task.train), ("test", task.test)):
                for row, label in zip(b.inputs, b.labels):
                    w.writerow([repr(float(v)) for v in row] + [int(label), task.task_id, split])
    os.replace(tmp, path)


def _parse_int(text, line, col):
    try:
        val = float(text)
    except ValueError:
        raise CsvFormatError(f"not a number: {text!r}", line, col) from None
    if not val.is_integer():
        raise CsvFormatError(f"expected an integer, got {text!r}", line, col)
    return int(val)


def load_csv(path, input_cols: Sequence[str] | None = None, label_col: str = "label",
             task_boundaries: Sequence[int] | None = None,
             class_count: int | None = None) -> TaskSequence:
    """Read a task sequence from CSV.

    Rows are assigned to tasks by the ``task`` column, or by
    ``task_boundaries`` (the 0-based data-row index at which each task after
    the first begins) when given. ``input_cols`` defaults to every ``x<i>``
    column in header order. Labels must lie in ``[0, class_count)``; without
    ``class_count`` they only need to be nonnegative.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError("file is empty, header row required", 1) from None
        if input_cols is None:
            input_cols = [h for h in header if h.startswith("x") and h[1:].isdigit()]
        missing = [c for c in list(input_cols) + [label_col] if c not in header]
        if task_boundaries is None and "task" not in header:
            missing.append("task")
        if missing:
            raise CsvFormatError(f"missing columns {missing}", 1)
        if not input_cols:
            raise CsvFormatError("no input columns", 1)
        xi = [header.index(c) for c in input_cols]
        li = header.index(label_col)
        ti = header.index("task") if "task" in header else None
        si = header.index("split") if "split" in header else None

        xs, ys, ts, splits = [], [], [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"expected {len(header)} fields, found {len(row)}", line)
            vals = []
            for c, i in zip(input_cols, xi):
                try:
                    v = float(row[i])
                except ValueError:
                    raise CsvFormatError(f"not a number: {row[i]!r}", line, c) from None
                if not math.isfinite(v):
                    raise CsvFormatError(f"non-finite value {row[i]!r}", line, c)
                vals.append(v)
            label = _parse_int(row[li], line, label_col)
            if label < 0 or (class_count is not None and label >= class_count):
                bound = f"[0, {class_count})" if class_count is not None else ">= 0"
                raise LabelRangeError(f"label {label} outside {bound}", line, label_col)
            if ti is not None and task_boundaries is None:
                task = _parse_int(row[ti], line, "task")
                if task < 0:
                    raise CsvFormatError(f"task {task} is negative", line, "task")
                ts.append(task)
            if si is not None:
                split = row[si].strip()
                if split not in ("train", "test"):
                    raise CsvFormatError(f"split must be train or test, got {split!r}", line, "split")
                splits.append(split)
            xs.append(vals)
            ys.append(label)

    n = len(ys)
    if n == 0:
        raise DataError(f"{path}: no data rows")
    x = np.array(xs, dtype=np.float64)
    y = np.array(ys, dtype=np.int64)
    if task_boundaries is not None:
        bounds = [0] + [int(b) for b in task_boundaries if int(b) != 0]
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])) or bounds[-1] >= n:
            raise DataError(f"task boundaries {list(task_boundaries)} invalid for {n} rows")
        t = np.searchsorted(np.array(bounds), np.arange(n), side="right") - 1
    else:
        t = np.array(ts, dtype=np.int64)
    present = sorted(set(t.tolist()))
    if present != list(range(len(present))):
        raise DataError(f"{path}: task ids must be consecutive from 0, found {present}")
    if si is None:
        log.warning("%s has no split column; rows serve as both train and test data", path)
    split_arr = np.array(splits) if si is not None else None
    n_classes = class_count if class_count is not None else int(y.max()) + 1

    tasks = []
    for k in present:
        rows = t == k
        if split_arr is None:
            tr = te = rows
        else:
            tr, te = rows & (split_arr == "train"), rows & (split_arr == "test")
        tasks.append(Task(Batch(x[tr], y[tr], k), Batch(x[te], y[te], k), k, n_classes))
    return TaskSequence(tasks, {"source": str(path)})
