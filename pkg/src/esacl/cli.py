"""Command line front end: ``esacl run | gen-data | sweep | eval``.

Exit codes: 0 success, 1 runtime or I/O error, 2 invalid configuration or
usage, 3 network capacity exhausted (a partial report is still written).
Set ``ESACL_LOG`` to error, warn, info or debug to control logging.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from . import checkpoint as ckpt_io
from .config import ConfigError, load_config, parse_config, set_dotted, tasks_from_source
from .data import DataError, save_csv
from .metrics import emit
from .runner import CapacityExhaustedError, evaluate, run_sequence

__all__ = ["main", "cmd_run", "cmd_gen_data", "cmd_sweep", "cmd_eval", "build_parser"]

log = logging.getLogger("esacl")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_CAPACITY = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}
CHECKPOINT_NAME = "checkpoint.esacl"
SUMMARY_FIELDS = ("acc_t", "flops", "capacity_weights_only", "capacity_with_masks",
                  "mean_sharpness", "memory_bytes")


def _err(msg):
    print(f"esacl: error: {msg}", file=sys.stderr)


def _setup_logging():
    name = os.environ.get("ESACL_LOG", "warn").lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if level is None:
        log.warning("ignoring unknown ESACL_LOG value %r", name)


def _execute(cfg, out_dir: Path, timings: bool = False) -> tuple[int, object]:
    """Run one experiment into ``out_dir``; returns (exit code, report or None)."""
    tasks = cfg.load_tasks()
    spec = cfg.network(tasks)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / CHECKPOINT_NAME
    code = EXIT_OK
    try:
        report = run_sequence(tasks, spec, cfg.train, on_task_end=lambda c: ckpt_io.save(c, ckpt_path),
                              wall_time=timings)
    except CapacityExhaustedError as exc:
        _err(str(exc))
        report, code = exc.report, EXIT_CAPACITY
    report.config["data"] = cfg.data
    emit(report, out_dir)
    (out_dir / "config.json").write_text(json.dumps(cfg.raw, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    return code, report


def cmd_run(config_path, out_dir=None, seed=None, timings: bool = False) -> int:
    """Train the configured task sequence; writes report files and a checkpoint.

    With ``timings`` the event log also carries per-task wall times, which
    makes the outputs no longer byte-reproducible.
    """
    try:
        cfg = load_config(config_path, seed_override=seed, output_override=out_dir)
    except ConfigError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_CONFIG
    try:
        code, report = _execute(cfg, cfg.output_dir, timings)
    except (OSError, DataError, ValueError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    if code == EXIT_OK:
        print(f"Acc_T={report.acc_t!r} report={cfg.output_dir / 'report.json'}")
    return code


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_gen_data(generator, params: dict, out_path) -> int:
    """Materialize a synthetic task sequence as CSV."""
    doc = {"data": {"generator": generator, "params": params}}
    try:
        cfg = parse_config(doc, seed_override=params.get("seed", 0))
        seq = tasks_from_source(cfg.data, cfg.seed)
    except ConfigError as exc:
        _err(f"invalid generator parameters: {exc}")
        return EXIT_CONFIG
    except DataError as exc:
        _err(str(exc))
        return EXIT_ERROR
    try:
        save_csv(seq, out_path)
    except OSError as exc:
        _err(f"cannot write {out_path}: {exc}")
        return EXIT_ERROR
    return EXIT_OK


def load_grid(grid_spec) -> dict:
    """Grid from a JSON file path or an inline JSON object: ``{"train.rho": [0.01, 0.1]}``."""
    text = str(grid_spec)
    if not text.lstrip().startswith("{"):
        path = Path(text)
        if not path.is_file():
            raise ConfigError("grid", f"file not found: {path}")
        text = path.read_text(encoding="utf-8")
    try:
        grid = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("grid", f"invalid JSON: {exc}") from None
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("grid", "must be a nonempty object of field -> list of values")
    for k, v in grid.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"grid.{k}", "must be a nonempty list")
    return grid


def _cell_name(i, n):
    return f"cell_{i:0{max(3, len(str(n - 1)))}d}"


def _run_cell(doc, base_dir, out_dir):
    """Worker entry; returns the summary fields or an error string."""
    try:
        cfg = parse_config(doc, base_dir, output_override=out_dir)
    except ConfigError as exc:
        return "invalid_config", str(exc), None
    try:
        code, report = _execute(cfg, Path(out_dir))
    except Exception as exc:  # a failing cell must not stop the sweep
        return "error", f"{type(exc).__name__}: {exc}", None
    values = {k: getattr(report, k) for k in SUMMARY_FIELDS}
    if code == EXIT_CAPACITY:
        return "capacity_exhausted", report.error, values
    return "ok", "", values


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    return "" if v is None else str(v)


def cmd_sweep(config_path, grid_spec, out_dir=None, jobs: int = 1) -> int:
    """Cartesian sweep; one subdirectory per cell plus ``summary.csv`` in grid order."""
    try:
        base = load_config(config_path, output_override=out_dir)
        grid = load_grid(grid_spec)
        keys = list(grid)
        cells = []
        for combo in itertools.product(*(grid[k] for k in keys)):
            doc = copy.deepcopy(base.raw)
            for k, v in zip(keys, combo):
                set_dotted(doc, k, v)
            cells.append((combo, doc))
    except ConfigError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_CONFIG
    if jobs < 1:
        _err("--jobs must be >= 1")
        return EXIT_CONFIG
    root = base.output_dir
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _err(f"cannot create {root}: {exc}")
        return EXIT_ERROR
    args = [(doc, base.base_dir, root / _cell_name(i, len(cells))) for i, (_, doc) in enumerate(cells)]
    if jobs == 1:
        results = [_run_cell(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, *zip(*args)))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell", *keys, "status", *SUMMARY_FIELDS, "error"])
    n_ok = 0
    for i, ((combo, _), (status, msg, values)) in enumerate(zip(cells, results)):
        n_ok += status == "ok"
        if status != "ok":
            log.warning("%s failed: %s", _cell_name(i, len(cells)), msg)
        values = values or {}
        w.writerow([_cell_name(i, len(cells)), *map(_fmt, combo), status,
                    *(_fmt(values.get(k)) for k in SUMMARY_FIELDS), msg])
    (root / "summary.csv").write_text(buf.getvalue(), encoding="utf-8")
    print(f"{n_ok}/{len(cells)} cells succeeded; summary={root / 'summary.csv'}")
    return EXIT_OK if n_ok else EXIT_ERROR


def cmd_eval(checkpoint_path, dataset_path, as_json: bool = False) -> int:
    """Evaluate every finished task of a checkpoint on a CSV dataset's test rows."""
    try:
        state = ckpt_io.load(checkpoint_path)
        tasks = tasks_from_source({"csv": str(dataset_path)}, 0)
    except (OSError, DataError, ckpt_io.CheckpointError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    n = min(len(tasks), state.completed_tasks)
    if n == 0:
        _err("checkpoint has no finished tasks present in the dataset")
        return EXIT_ERROR
    if len(tasks) > n:
        log.warning("skipping tasks %d..%d: not trained in this checkpoint", n, len(tasks) - 1)
    rows = []
    for i in range(n):
        test = tasks[i].test if len(tasks[i].test) else tasks[i].train
        if test.inputs.shape[1] != state.spec.input_dim:
            _err(f"dataset has {test.inputs.shape[1]} inputs, network expects {state.spec.input_dim}")
            return EXIT_ERROR
        rows.append((i, evaluate(state.spec, state.params, state.mask_state, i, test,
                                 completed_tasks=state.completed_tasks)))
    if as_json:
        print(json.dumps({"accuracy": [a for _, a in rows]}))
    else:
        print("task\taccuracy")
        for i, a in rows:
            print(f"{i}\t{a!r}")
    return EXIT_OK


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k, _parse_value(v)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esacl", description="Sparse sharpness-aware continual learning experiments.")
    p.add_argument("--version", action="version", version=f"esacl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train a task sequence from a JSON config")
    r.add_argument("-c", "--config", required=True, help="experiment config (JSON)")
    r.add_argument("-o", "--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=int, help="master seed (overrides config seed)")
    r.add_argument("--timings", action="store_true",
                   help="record per-task wall times in events.jsonl (outputs stop being byte-reproducible)")

    g = sub.add_parser("gen-data", help="write a synthetic task sequence to CSV")
    g.add_argument("generator", choices=["split_gaussians", "permuted"])
    g.add_argument("-p", "--param", type=_kv, action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter, e.g. -p n_tasks=5 (repeatable)")
    g.add_argument("-o", "--out", required=True, help="output CSV path")
    g.add_argument("--seed", type=int, help="generator seed")

    s = sub.add_parser("sweep", help="cartesian hyperparameter sweep")
    s.add_argument("-c", "--config", required=True, help="base experiment config (JSON)")
    s.add_argument("-g", "--grid", required=True,
                   help='grid JSON file or inline object, e.g. \'{"train.rho": [0.01, 0.05]}\'')
    s.add_argument("-o", "--out", help="sweep output directory (overrides output_dir)")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default 1)")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a CSV dataset")
    e.add_argument("-k", "--checkpoint", required=True)
    e.add_argument("-d", "--data", required=True, help="CSV dataset")
    e.add_argument("--json", action="store_true", help="print machine-readable output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed, args.timings)
    if args.command == "gen-data":
        params = dict(args.param)
        if args.seed is not None:
            params["seed"] = args.seed
        return cmd_gen_data(args.generator, params, args.out)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.grid, args.out, args.jobs)
    return cmd_eval(args.checkpoint, args.data, args.json)


if __name__ == "__main__":
    sys.exit(main())
