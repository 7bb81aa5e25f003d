"""The fixed desk-scale benchmark used by the acceptance suite and demos."""
from __future__ import annotations

from dataclasses import replace

from .data import TaskSequence, gen_split_gaussians
from .nn import NetworkSpec
from .runner import TrainConfig, network_for

DATA_SEED = 2024
DATA = dict(n_tasks=5, classes_per_task=2, dim=10, n_per_class=250, separation=3.0)
HIDDEN = (32,)


def benchmark_tasks(seed: int = DATA_SEED) -> TaskSequence:
    return gen_split_gaussians(seed=seed, **DATA)


def benchmark_network(tasks: TaskSequence) -> NetworkSpec:
    return network_for(tasks, HIDDEN, "relu")


def benchmark_config(**overrides) -> TrainConfig:
    """Library defaults with per-epoch probing off (it only feeds the curves)."""
    return replace(TrainConfig(probe_every_epoch=False), **overrides)
