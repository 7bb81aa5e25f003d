"""JSON experiment configuration.

Example document::

    {
      "seed": 0,
      "output_dir": "runs/quickstart",
      "network": {"hidden": [32], "activation": "relu"},
      "train": {"eta": 0.01, "rho": 0.05, "sparsity": 0.8,
                "selection": {"inner_frac": 0.4, "outer_frac": 0.4}},
      "data": {"generator": "split_gaussians",
               "params": {"n_tasks": 5, "classes_per_task": 2, "dim": 10,
                          "n_per_class": 250, "separation": 3.0}}
    }

``data`` may instead name a CSV file: ``{"csv": "tasks.csv"}`` (relative
paths resolve against the config file). The top-level ``seed`` seeds
training and, unless ``data.params.seed`` is set, the generator. Every
section is optional except ``data``; unknown keys are errors.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .data import TaskSequence, gen_permuted, gen_split_gaussians, load_csv
from .nn import ACTIVATIONS, NetworkSpec
from .runner import TrainConfig
from .selection import OUTER_SOURCES, SelectionConfig

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "set_dotted"]


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


# name -> (predicate, description)
_TRAIN_RULES = {
    "eta": (lambda v: _num(v) and 0 <= v <= 1, "a number in [0, 1]"),
    "alpha": (lambda v: _num(v) and v > 0, "a positive number"),
    "rho": (lambda v: _num(v) and v >= 0, "a nonnegative number"),
    "sparsity": (lambda v: _num(v) and 0 <= v < 1, "a number in [0, 1)"),
    "tau": (lambda v: _num(v) and v > 0, "a positive number"),
    "k_frac": (lambda v: _num(v) and 0 < v <= 1, "a number in (0, 1]"),
    "epochs_per_task": (lambda v: _int(v) and v >= 0, "a nonnegative integer"),
    "batch_size": (lambda v: _int(v) and v >= 1, "a positive integer"),
    "momentum_decay": (lambda v: _num(v) and 0 < v <= 1, "a number in (0, 1]"),
    "gamma": (lambda v: _num(v) and 0 <= v <= 1, "a number in [0, 1]"),
    "probe_rho": (lambda v: _num(v) and v >= 0, "a nonnegative number"),
    "probe_dirs": (lambda v: _int(v) and v >= 1, "a positive integer"),
    "probe_every_epoch": (lambda v: isinstance(v, bool), "true or false"),
}
_SELECTION_RULES = {
    "inner_frac": (lambda v: _num(v) and 0 < v <= 1, "a number in (0, 1]"),
    "outer_frac": (lambda v: _num(v) and 0 < v <= 1, "a number in (0, 1]"),
    "outer_from": (lambda v: v in OUTER_SOURCES, f"one of {list(OUTER_SOURCES)}"),
}
_GEN_PARAMS = {
    "n_tasks": (lambda v: _int(v) and v >= 1, "a positive integer"),
    "classes_per_task": (lambda v: _int(v) and v >= 1, "a positive integer"),
    "dim": (lambda v: _int(v) and v >= 1, "a positive integer"),
    "n_per_class": (lambda v: _int(v) and v >= 1, "a positive integer"),
    "separation": (lambda v: _num(v) and v >= 0, "a nonnegative number"),
    "seed": (lambda v: _int(v) and v >= 0, "a nonnegative integer"),
}
GENERATORS = ("split_gaussians", "permuted")
_TOP_KEYS = {"seed", "output_dir", "network", "train", "data"}


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(where, "must be an object")
    for k in section:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}" if where else k, "unknown key")


def _apply_rules(section: dict, rules: dict, where: str):
    for k, v in section.items():
        ok, desc = rules[k]
        if not ok(v):
            raise ConfigError(f"{where}.{k}", f"must be {desc}, got {v!r}")


@dataclass
class ExperimentConfig:
    seed: int
    output_dir: Path
    hidden: tuple[int, ...]
    activation: str
    train: TrainConfig
    data: dict
    base_dir: Path
    raw: dict

    def load_tasks(self) -> TaskSequence:
        return tasks_from_source(self.data, self.seed, self.base_dir)

    def network(self, tasks: TaskSequence) -> NetworkSpec:
        return NetworkSpec((tasks.input_dim, *self.hidden, tasks.class_count), self.activation, len(tasks))


def tasks_from_source(data: dict, seed: int, base_dir: Path = Path(".")) -> TaskSequence:
    if "csv" in data:
        path = Path(data["csv"])
        if not path.is_absolute():
            path = base_dir / path
        return load_csv(path, task_boundaries=data.get("task_boundaries"),
                        class_count=data.get("class_count"))
    params = dict(data.get("params", {}))
    params.setdefault("seed", seed)
    if data["generator"] == "split_gaussians":
        return gen_split_gaussians(**params)
    n_tasks = params.pop("n_tasks")
    seed_ = params.pop("seed")
    base = gen_split_gaussians(n_tasks=1, seed=seed_, **params)[0]
    seq = gen_permuted(base, n_tasks, seed_)
    seq.metadata["base"] = params
    return seq


def parse_config(doc: dict, base_dir=".", seed_override: int | None = None,
                 output_override=None) -> ExperimentConfig:
    """Validate a config document completely; raises :class:`ConfigError`."""
    doc = copy.deepcopy(doc)
    _check_keys(doc, _TOP_KEYS, "")
    if "data" not in doc:
        raise ConfigError("data", "required")
    seed = doc.get("seed", 0) if seed_override is None else seed_override
    if not (_int(seed) and seed >= 0):
        raise ConfigError("seed", f"must be a nonnegative integer, got {seed!r}")

    net = doc.get("network", {})
    _check_keys(net, {"hidden", "activation"}, "network")
    hidden = net.get("hidden", [32])
    if not (isinstance(hidden, list) and all(_int(h) and h >= 1 for h in hidden)):
        raise ConfigError("network.hidden", f"must be a list of positive integers, got {hidden!r}")
    activation = net.get("activation", "relu")
    if activation not in ACTIVATIONS:
        raise ConfigError("network.activation", f"must be one of {list(ACTIVATIONS)}, got {activation!r}")

    train = dict(doc.get("train", {}))
    _check_keys(train, set(_TRAIN_RULES) | {"selection"}, "train")
    selection = train.pop("selection", {})
    _check_keys(selection, set(_SELECTION_RULES), "train.selection")
    _apply_rules(train, _TRAIN_RULES, "train")
    _apply_rules(selection, _SELECTION_RULES, "train.selection")
    train_cfg = TrainConfig(selection=SelectionConfig(**selection), seed=seed, **train)

    data = doc["data"]
    _check_keys(data, {"generator", "params", "csv", "task_boundaries", "class_count"}, "data")
    if ("csv" in data) == ("generator" in data):
        raise ConfigError("data", "give exactly one of 'generator' or 'csv'")
    if "csv" in data:
        if not isinstance(data["csv"], str):
            raise ConfigError("data.csv", "must be a path string")
        if "params" in data:
            raise ConfigError("data.params", "not allowed with csv")
        tb = data.get("task_boundaries")
        if tb is not None and not (isinstance(tb, list) and all(_int(b) and b >= 0 for b in tb)):
            raise ConfigError("data.task_boundaries", "must be a list of nonnegative integers")
        cc = data.get("class_count")
        if cc is not None and not (_int(cc) and cc >= 1):
            raise ConfigError("data.class_count", "must be a positive integer")
    else:
        if data["generator"] not in GENERATORS:
            raise ConfigError("data.generator", f"must be one of {list(GENERATORS)}, got {data['generator']!r}")
        for k in ("task_boundaries", "class_count"):
            if k in data:
                raise ConfigError(f"data.{k}", "only allowed with csv")
        params = data.get("params", {})
        _check_keys(params, set(_GEN_PARAMS), "data.params")
        _apply_rules(params, _GEN_PARAMS, "data.params")
        for k in ("n_tasks", "classes_per_task", "dim", "n_per_class", "separation"):
            if k not in params:
                raise ConfigError(f"data.params.{k}", "required")

    declared = doc.get("output_dir", "runs/latest")
    if not isinstance(declared, str):
        raise ConfigError("output_dir", "must be a path string")
    base_dir = Path(base_dir)
    out = Path(output_override) if output_override is not None else base_dir / declared
    # normalized echo with every default filled in
    train_doc = train_cfg.to_dict()
    train_doc.pop("seed")
    normalized = {"seed": seed, "output_dir": declared,
                  "network": {"hidden": list(hidden), "activation": activation},
                  "train": train_doc, "data": data}
    return ExperimentConfig(seed, out, tuple(hidden), activation, train_cfg, data, base_dir, normalized)


def load_config(path, seed_override=None, output_override=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    return parse_config(doc, path.parent, seed_override, output_override)


def set_dotted(doc: dict, dotted: str, value) -> None:
    """``set_dotted(d, "train.rho", 0.1)`` sets ``d["train"]["rho"]``."""
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "path does not lead to an object")
    node[keys[-1]] = value
