"""Per-task training, one-shot pruning, freezing and expansion.

A run walks the task sequence once. For every task the optimizer does SFW
steps driven by momentum over sharpness-aware gradients, restricted to the
coordinates the task may still update. At the end of the task a single
magnitude prune keeps the largest ``1 - s`` fraction of those coordinates.
The survivors are frozen for good and recorded as the task's inference mask.
Everything else is redrawn for the next task.
"""
from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import metrics
from .data import Task, TaskSequence
from .frank_wolfe import KSparsePolytope, MomentumState, lmo, momentum_update, sfw_update
from .nn import Batch, NetworkSpec, forward, init_params, per_example_losses
from .sam import sam_gradient, sharpness_probe
from .selection import SelectionConfig, keep_count, top_j_indices

__all__ = [
    "CapacityExhaustedError",
    "TrainConfig",
    "MaskState",
    "Checkpoint",
    "TrainLog",
    "initial_checkpoint",
    "begin_task",
    "train_task",
    "prune",
    "freeze_and_expand",
    "evaluate",
    "run_sequence",
    "network_for",
]

log = logging.getLogger(__name__)


class CapacityExhaustedError(RuntimeError):
    """No coordinates left to train. ``report`` holds the partial run, if any."""

    def __init__(self, task_index: int, report=None):
        super().__init__(f"capacity exhausted at task {task_index}")
        self.task_index = task_index
        self.report = report


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.01
    alpha: float = 0.1
    rho: float = 0.05
    sparsity: float = 0.8
    tau: float = 5.0
    k_frac: float = 0.05
    epochs_per_task: int = 50
    batch_size: int = 32
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    seed: int = 0
    momentum_decay: float = 1.0
    gamma: float = 0.75
    probe_rho: float = 0.05
    probe_dirs: int = 64
    probe_every_epoch: bool = True

    def __post_init__(self):
        if isinstance(self.selection, dict):
            object.__setattr__(self, "selection", SelectionConfig(**self.selection))
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError("sparsity must lie in [0, 1)")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0.0 < self.k_frac <= 1.0:
            raise ValueError("k_frac must lie in (0, 1]")
        if self.epochs_per_task < 0:
            raise ValueError("epochs_per_task must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.momentum_decay <= 1.0:
            raise ValueError("momentum_decay must lie in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.probe_dirs < 1 or self.probe_rho < 0:
            raise ValueError("probe_dirs must be >= 1 and probe_rho >= 0")

    @property
    def polytope(self) -> KSparsePolytope:
        return KSparsePolytope(self.k_frac, self.tau)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MaskState:
    trainable: np.ndarray
    frozen: np.ndarray
    per_task_masks: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def fresh(cls, d: int) -> "MaskState":
        return cls(np.ones(d, dtype=bool), np.zeros(d, dtype=bool), [])

    @property
    def forward_mask(self) -> np.ndarray:
        return self.trainable | self.frozen

    def check(self) -> None:
        if np.any(self.trainable & self.frozen):
            raise AssertionError("a coordinate is both trainable and frozen")
        for t, m in enumerate(self.per_task_masks):
            if np.any(m & ~self.frozen):
                raise AssertionError(f"task {t} mask has unfrozen coordinates")

    def copy(self) -> "MaskState":
        return MaskState(self.trainable.copy(), self.frozen.copy(),
                         [m.copy() for m in self.per_task_masks])

    def __eq__(self, other):
        if not isinstance(other, MaskState):
            return NotImplemented
        return (np.array_equal(self.trainable, other.trainable)
                and np.array_equal(self.frozen, other.frozen)
                and len(self.per_task_masks) == len(other.per_task_masks)
                and all(np.array_equal(a, b) for a, b in zip(self.per_task_masks, other.per_task_masks)))


@dataclass
class Checkpoint:
    """Complete resumable state of a run.

    ``history`` carries what the report needs from already finished tasks
    (accuracy rows, per-task stats, curves, events, FLOPs tally).
    """

    spec: NetworkSpec
    params: np.ndarray
    mask_state: MaskState
    optimizer: MomentumState
    completed_tasks: int
    rng_state: dict
    history: dict = field(default_factory=dict)

    def rng(self) -> np.random.Generator:
        gen = np.random.Generator(np.random.PCG64())
        gen.bit_generator.state = copy.deepcopy(self.rng_state)
        return gen

    def copy(self) -> "Checkpoint":
        return Checkpoint(self.spec, self.params.copy(), self.mask_state.copy(),
                          MomentumState(self.optimizer.m.copy(), self.optimizer.alpha, self.optimizer.decay),
                          self.completed_tasks, copy.deepcopy(self.rng_state), copy.deepcopy(self.history))

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (self.spec == other.spec and np.array_equal(self.params, other.params)
                and self.mask_state == other.mask_state
                and np.array_equal(self.optimizer.m, other.optimizer.m)
                and self.optimizer.alpha == other.optimizer.alpha
                and self.optimizer.decay == other.optimizer.decay
                and self.completed_tasks == other.completed_tasks
                and self.rng_state == other.rng_state
                # json text so NaN curve entries compare equal
                and json.dumps(self.history, sort_keys=True) == json.dumps(other.history, sort_keys=True))


@dataclass
class TrainLog:
    """Counters and per-epoch curve rows filled in by :func:`train_task`."""

    steps: int = 0
    grad_examples: int = 0
    forward_examples: int = 0
    densities: list = field(default_factory=list)
    epoch_counts: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    step_hook: Callable[[int], None] | None = None


def network_for(tasks: TaskSequence, hidden=(32,), activation: str = "relu") -> NetworkSpec:
    """Multi-head spec sized for ``tasks``: one head per task."""
    dims = (tasks.input_dim, *hidden, tasks.class_count)
    return NetworkSpec(dims, activation, heads=len(tasks))


def initial_checkpoint(spec: NetworkSpec, cfg: TrainConfig) -> Checkpoint:
    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, rng)
    return Checkpoint(spec, params, MaskState.fresh(spec.size),
                      MomentumState.zeros(spec.size, cfg.alpha, cfg.momentum_decay),
                      0, rng.bit_generator.state, {})


def path_coordinates(spec: NetworkSpec, head: int) -> np.ndarray:
    layer = spec.layer_of_coordinate()
    return np.isin(layer, spec.path_layers(head))


def begin_task(state: Checkpoint, task_id: int) -> Checkpoint:
    """Restrict the trainable set to unfrozen coordinates on ``task_id``'s path."""
    path = path_coordinates(state.spec, task_id)
    trainable = path & ~state.mask_state.frozen
    if not trainable.any():
        raise CapacityExhaustedError(task_id)
    out = state.copy()
    out.mask_state.trainable = trainable
    return out


def _accuracy_and_loss(spec, params, mask, data: Batch):
    logits = forward(spec, params, mask, data)
    acc = float(np.mean(np.argmax(logits, axis=1) == data.labels))
    return acc, float(np.mean(per_example_losses(logits, data.labels)))


def _path_densities(spec, params, mask, head):
    eff = np.where(mask, params, 0.0)
    layers = spec.unpack(eff)
    return [float(np.count_nonzero(layers[k][0])) / layers[k][0].size for k in spec.path_layers(head)]


def train_task(state: Checkpoint, task: Task, cfg: TrainConfig, train_log: TrainLog | None = None) -> Checkpoint:
    """SFW + SAM + data selection over ``cfg.epochs_per_task`` epochs of ``task``.

    Only ``state.mask_state.trainable`` coordinates move; everything else in
    ``params`` is left bit-identical.
    """
    data = task.train
    if len(data) == 0:
        raise ValueError(f"task {task.task_id} has no training data")
    spec = state.spec
    out = state.copy()
    if cfg.epochs_per_task == 0:
        return out
    train_log = TrainLog() if train_log is None else train_log
    rng = out.rng()
    trainable = out.mask_state.trainable
    if not trainable.any():
        raise CapacityExhaustedError(task.task_id)
    fwd = out.mask_state.forward_mask
    poly = cfg.polytope
    sel = cfg.selection
    need_losses = sel.inner_frac < 1.0 or sel.outer_frac < 1.0
    theta = out.params
    momentum = out.optimizer
    n = len(data)

    for epoch in range(cfg.epochs_per_task):
        train_log.densities.append(_path_densities(spec, theta, fwd, task.task_id))
        grad0, fwd0 = train_log.grad_examples, train_log.forward_examples
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = data.subset(order[start:start + cfg.batch_size])
            b = len(batch)
            if need_losses:
                losses = per_example_losses(forward(spec, theta, fwd, batch), batch.labels)
                train_log.forward_examples += b
                idx_s = top_j_indices(losses, keep_count(sel.inner_frac, b))
                pool = idx_s if sel.outer_from == "support" else np.arange(b)
                idx_o = pool[top_j_indices(losses[pool], keep_count(sel.outer_frac, pool.size))]
                support, outer = batch.subset(idx_s), batch.subset(idx_o)
            else:
                support = outer = batch
            g = sam_gradient(spec, theta, fwd, support, cfg.rho, outer_batch=outer, trainable=trainable)
            train_log.grad_examples += len(outer) + (len(support) if cfg.rho > 0 else 0)
            momentum = momentum_update(momentum, g)
            v = lmo(momentum.m, poly, trainable)
            theta = sfw_update(theta, v, cfg.eta, trainable)
            train_log.steps += 1
            if train_log.step_hook is not None:
                train_log.step_hook(task.task_id)

        train_log.epoch_counts.append((train_log.grad_examples - grad0, train_log.forward_examples - fwd0))
        acc, loss_val = _accuracy_and_loss(spec, theta, fwd, data)
        sharp = None
        if cfg.probe_every_epoch or epoch == cfg.epochs_per_task - 1:
            sharp = sharpness_probe(spec, theta, fwd, data, cfg.probe_rho, cfg.probe_dirs,
                                    seed=_probe_seed(cfg.seed, task.task_id, epoch),
                                    directions_mask=trainable)
        train_log.curves.append({"task": task.task_id, "epoch": epoch, "loss": loss_val,
                                 "accuracy": acc,
                                 "sharpness_probe": float("nan") if sharp is None else sharp})

    out.params = theta
    out.optimizer = momentum
    out.rng_state = rng.bit_generator.state
    return out


def _probe_seed(seed, task, epoch):
    # epoch -1 is the end-of-task probe
    return [int(seed), int(task), int(epoch) + 1, 7]


def _prune_count(sparsity: float, n: int) -> int:
    return min(n, math.ceil(round(sparsity * n, 9)))


def prune(params, sparsity: float, mask_state: MaskState) -> tuple[np.ndarray, np.ndarray]:
    """One-shot magnitude prune of the trainable coordinates.

    Zeroes ``ceil(s * n)`` of the ``n`` trainable coordinates, smallest
    ``|theta|`` first (lower index kept on ties). Returns ``(pruned_params,
    survivors)`` where survivors = frozen plus kept trainable coordinates.
    """
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must lie in [0, 1)")
    params = np.array(params, dtype=np.float64, copy=True)
    idx = np.flatnonzero(mask_state.trainable)
    n_keep = idx.size - _prune_count(sparsity, idx.size)
    order = np.argsort(-np.abs(params[idx]), kind="stable")
    kept = idx[order[:n_keep]]
    dropped = idx[order[n_keep:]]
    params[dropped] = 0.0
    survivors = mask_state.frozen.copy()
    survivors[kept] = True
    return params, survivors


def freeze_and_expand(state: Checkpoint, survivor_mask, require_capacity: bool = True) -> Checkpoint:
    """Freeze the survivors, snapshot them as this task's mask, redraw the rest.

    Redrawn coordinates become trainable with zero momentum. Consumes the
    checkpoint's RNG stream.
    """
    survivors = np.asarray(survivor_mask, dtype=bool)
    if survivors.shape != state.params.shape:
        raise ValueError("survivor mask length does not match params")
    task_index = state.completed_tasks
    free = ~survivors
    if require_capacity and not free.any():
        raise CapacityExhaustedError(task_index)
    out = state.copy()
    rng = out.rng()
    out.params = init_params(out.spec, rng, where=free, params=out.params)
    out.mask_state = MaskState(free.copy(), survivors.copy(),
                               out.mask_state.per_task_masks + [survivors.copy()])
    m = out.optimizer.m.copy()
    m[free] = 0.0
    out.optimizer = MomentumState(m, out.optimizer.alpha, out.optimizer.decay)
    out.completed_tasks = task_index + 1
    out.rng_state = rng.bit_generator.state
    return out


def evaluate(spec: NetworkSpec, params, mask_state: MaskState, task_index: int, test_set: Batch,
             completed_tasks: int | None = None) -> float:
    """Accuracy of head ``task_index`` under that task's inference mask.

    Finished tasks use their snapshot mask; the task in progress
    (``task_index == completed_tasks``) uses trainable | frozen.
    """
    done = len(mask_state.per_task_masks) if completed_tasks is None else completed_tasks
    if not 0 <= task_index <= done or task_index >= spec.heads:
        raise ValueError(f"unknown task {task_index} ({done} completed, {spec.heads} heads)")
    if len(test_set) == 0:
        raise ValueError("empty test set")
    mask = mask_state.per_task_masks[task_index] if task_index < done else mask_state.forward_mask
    data = test_set if test_set.task_id == task_index else Batch(test_set.inputs, test_set.labels, task_index)
    logits = forward(spec, params, mask, data)
    return float(np.mean(np.argmax(logits, axis=1) == data.labels))


def _build_report(state: Checkpoint, cfg: TrainConfig, n_tasks_done: int, batch_size: int,
                  status="complete", error=None) -> metrics.RunReport:
    h = state.history
    R = h.get("R", [])
    mem = metrics.memory_footprint(state.spec, state.mask_state, batch_size)
    T = max(1, n_tasks_done)
    return metrics.RunReport(
        R=R,
        acc_t=metrics.acc_t(R) if R else float("nan"),
        flops=int(h.get("flops", 0)),
        capacity_weights_only=metrics.capacity(cfg.sparsity, 1.0, T),
        capacity_with_masks=metrics.capacity(cfg.sparsity, cfg.gamma, T),
        memory_bytes=mem.total,
        memory_breakdown={"params": mem.params, "activations": mem.activations,
                          "gradients": mem.gradients, "masks": mem.masks},
        config={"network": {"layer_dims": list(state.spec.layer_dims),
                            "activation": state.spec.activation, "heads": state.spec.heads},
                "train": cfg.to_dict()},
        per_task=h.get("per_task", []),
        curves=h.get("curves", []),
        events=h.get("events", []),
        status=status,
        error=error,
    )


def run_sequence(tasks: TaskSequence, spec: NetworkSpec, cfg: TrainConfig,
                 resume: Checkpoint | None = None,
                 on_task_end: Callable[[Checkpoint], None] | None = None,
                 stop_after: int | None = None,
                 step_hook: Callable[[int], None] | None = None,
                 wall_time: bool = False) -> metrics.RunReport:
    """Train, prune and freeze task by task, building the accuracy matrix.

    ``resume`` continues from a checkpoint taken after a finished task.
    ``on_task_end`` receives the checkpoint after every task; ``stop_after``
    ends the run early after that many completed tasks (for checkpoint tests
    and partial runs). ``wall_time`` adds per-task timings to the event log;
    it is off by default so that every output is a function of the seed.
    """
    if len(tasks) < 1:
        raise ValueError("need at least one task")
    if spec.heads < len(tasks):
        raise ValueError(f"{len(tasks)} tasks but only {spec.heads} heads")
    state = initial_checkpoint(spec, cfg) if resume is None else resume.copy()
    h = state.history
    h.setdefault("R", [])
    h.setdefault("per_task", [])
    h.setdefault("curves", [])
    h.setdefault("events", [])
    h.setdefault("flops", 0)
    h.setdefault("steps", 0)

    def event(kind, **kw):
        h["events"].append({"event": kind, **kw})

    last = len(tasks) if stop_after is None else min(len(tasks), stop_after)
    for t in range(state.completed_tasks, last):
        task = tasks[t]
        t0 = time.perf_counter()
        event("task_start", task=t, step=h["steps"])
        try:
            state = begin_task(state, t)
            tlog = TrainLog(step_hook=step_hook)
            state = train_task(state, task, cfg, tlog)
            h = state.history
            h["steps"] += tlog.steps
            fwd = state.mask_state.forward_mask
            pre_acc = evaluate(spec, state.params, state.mask_state, t, task.test, completed_tasks=t)
            sharp = sharpness_probe(spec, state.params, fwd, task.train, cfg.probe_rho, cfg.probe_dirs,
                                    seed=_probe_seed(cfg.seed, t, -1),
                                    directions_mask=state.mask_state.trainable)
            pre_train_acc, pre_loss = _accuracy_and_loss(spec, state.params, fwd, task.train)

            trainable_before = state.mask_state.trainable.copy()
            pruned, survivors = prune(state.params, cfg.sparsity, state.mask_state)
            zero_frac = float(np.mean(pruned[trainable_before] == 0.0))
            event("prune", task=t, step=h["steps"], zero_fraction=zero_frac,
                  trainable=int(trainable_before.sum()))
            state.params = pruned
            post_train_acc, post_loss = _accuracy_and_loss(spec, pruned, survivors, task.train)
            state = freeze_and_expand(state, survivors, require_capacity=t < len(tasks) - 1)
            h = state.history
            event("freeze_expand", task=t, step=h["steps"], frozen=int(state.mask_state.frozen.sum()))
        except CapacityExhaustedError as exc:
            exc.report = _build_report(state, cfg, len(h["R"]), cfg.batch_size,
                                       status="capacity_exhausted", error=str(exc))
            raise

        row = [evaluate(spec, state.params, state.mask_state, i, tasks[i].test) for i in range(t + 1)]
        h["R"].append(row)
        # gradient evaluations cost forward + backward (3x), selection passes forward only
        task_flops = sum(
            metrics.training_flops(spec.layer_dims, n_grad, 1, [dens])
            + 2 * metrics.forward_macs(spec.layer_dims, dens) * n_fwd
            for dens, (n_grad, n_fwd) in zip(tlog.densities, tlog.epoch_counts)
        )
        h["flops"] += task_flops
        h["curves"].extend(tlog.curves)
        h["per_task"].append({
            "task": t,
            "steps": tlog.steps,
            "grad_examples": tlog.grad_examples,
            "forward_examples": tlog.forward_examples,
            "flops": task_flops,
            "pre_prune_test_acc": pre_acc,
            "post_prune_test_acc": row[t],
            "pre_prune_train_acc": pre_train_acc,
            "post_prune_train_acc": post_train_acc,
            "pre_prune_train_loss": pre_loss,
            "post_prune_train_loss": post_loss,
            "sharpness": sharp,
            "zero_fraction_after_prune": zero_frac,
            "trainable": int(trainable_before.sum()),
            "survivors_new": int(survivors.sum() - (state.mask_state.per_task_masks[t - 1].sum() if t else 0)),
            "frozen_fraction": float(state.mask_state.frozen.mean()),
        })
        event("evaluate", task=t, row=row)
        if wall_time:
            event("task_end", task=t, step=h["steps"], wall_time=time.perf_counter() - t0)
        else:
            event("task_end", task=t, step=h["steps"])
        log.info("task %d: acc row %s", t, ["%.3f" % a for a in row])
        if on_task_end is not None:
            on_task_end(state.copy())

    return _build_report(state, cfg, len(h["R"]), cfg.batch_size)
