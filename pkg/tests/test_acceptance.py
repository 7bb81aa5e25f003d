"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (the lines appear in the terminal
summary) or directly as a script for the summary table alone.
"""
import itertools
import math
import time
from functools import lru_cache

import numpy as np

from esacl import checkpoint as ck
from esacl.benchmark import benchmark_config, benchmark_network, benchmark_tasks
from esacl.frank_wolfe import KSparsePolytope, MomentumState, contains, lmo, momentum_update, sfw_update
from esacl.metrics import acc_t, capacity, training_flops
from esacl.nn import Batch, NetworkSpec, finite_diff_grad, grad, init_params, max_relative_error
from esacl.runner import evaluate, run_sequence
from esacl.selection import SelectionConfig

RESULTS = {}


def report_line(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {detail}"
    RESULTS[n] = line
    print(line, flush=True)
    return ok


@lru_cache(maxsize=None)
def tasks():
    return benchmark_tasks()


@lru_cache(maxsize=None)
def bench(seed, rho=0.05, inner=0.4, outer=0.4):
    t = tasks()
    cfg = benchmark_config(seed=seed, rho=rho, selection=SelectionConfig(inner, outer))
    return run_sequence(t, benchmark_network(t), cfg)


def test_c01_gradient_correctness():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        depth = int(rng.integers(2, 5))
        dims = tuple(int(x) for x in rng.integers(2, 9, size=depth))
        spec = NetworkSpec(dims, ("relu", "tanh")[seed % 2], heads=1 + seed % 2)
        params = init_params(spec, rng)
        batch = Batch(rng.standard_normal((5, dims[0])), rng.integers(0, dims[-1], 5), int(rng.integers(0, spec.heads)))
        mask = rng.random(spec.size) > 0.1
        worst = max(worst, max_relative_error(grad(spec, params, mask, batch),
                                              finite_diff_grad(spec, params, mask, batch, 1e-5)))
    took = time.perf_counter() - start
    ok = worst < 1e-5 and took < 30
    report_line(1, ok, f"max rel err {worst:.2e} over 100 nets (< 1e-5), {took:.1f}s (< 30s)")
    assert ok


def test_c02_lmo_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    mismatches = 0
    for trial in range(500):
        d = int(rng.integers(1, 9))
        poly = KSparsePolytope(float(rng.uniform(0.01, 1)), float(rng.uniform(0.1, 4)))
        m = rng.standard_normal(d)
        if trial % 4 == 0:
            m = np.round(m)
        k = poly.k_abs(d)
        best = math.inf
        for subset in itertools.combinations(range(d), k):
            for signs in itertools.product((-1.0, 1.0), repeat=k):
                best = min(best, math.fsum(m[i] * poly.tau * s for i, s in zip(subset, signs)))
        v = lmo(m, poly)
        mismatches += math.fsum(m * v) != best
    took = time.perf_counter() - start
    ok = mismatches == 0 and took < 10
    report_line(2, ok, f"{500 - mismatches}/500 LMO outputs attain brute-force minimum, {took:.1f}s (< 10s)")
    assert ok


def test_c03_hull_invariance():
    rng = np.random.default_rng(3)
    outside = 0
    for _ in range(20):
        d = int(rng.integers(2, 40))
        poly = KSparsePolytope(float(rng.uniform(0.02, 1)), float(rng.uniform(0.1, 5)))
        theta = np.zeros(d)
        state = MomentumState.zeros(d, float(rng.uniform(0.01, 1)))
        for _ in range(1000):
            state = momentum_update(state, rng.standard_normal(d))
            theta = sfw_update(theta, lmo(state.m, poly), float(rng.uniform(1e-6, 1.0)))
            outside += not contains(poly, theta, tol=1e-9)
    ok = outside == 0
    report_line(3, ok, f"20 trajectories x 1000 SFW steps from 0, {outside} iterates outside C(K, tau)")
    assert ok


def test_c04_one_shot_sparsity():
    t = tasks()
    trace = []
    rep = run_sequence(t, benchmark_network(t), benchmark_config(seed=0, sparsity=0.8),
                       step_hook=lambda task: trace.append(("step", task)),
                       on_task_end=lambda c: trace.append(("end", c.completed_tasks - 1)))
    exact = all(p["zero_fraction_after_prune"] * p["trainable"] == math.ceil(round(0.8 * p["trainable"], 9))
                for p in rep.per_task)
    # every step of task t happens before task t's prune/freeze completes, none after
    ends = [i for i, e in enumerate(trace) if e[0] == "end"]
    no_stray = all(task == ti for ti, end in enumerate(ends)
                   for kind, task in trace[(ends[ti - 1] + 1 if ti else 0):end] if kind == "step")
    prunes = [e for e in rep.events if e["event"] == "prune"]
    starts = [e for e in rep.events if e["event"] == "task_start"]
    no_gap_steps = all(starts[i + 1]["step"] == prunes[i]["step"] for i in range(len(prunes) - 1))
    fracs = [p["zero_fraction_after_prune"] for p in rep.per_task]
    ok = exact and no_stray and no_gap_steps and len(prunes) == len(t)
    report_line(4, ok, f"zero fractions {fracs} (ceil of 0.8), no step between prune and next task: "
                       f"{no_stray and no_gap_steps}")
    assert ok


def test_c05_zero_forgetting():
    t = tasks()
    spec = benchmark_network(t)
    snaps = []
    rep = run_sequence(t, spec, benchmark_config(seed=0), on_task_end=snaps.append)
    final = snaps[-1]
    T = len(t)
    ok = all(rep.R[T - 1][i] == rep.R[i][i]
             and evaluate(spec, final.params, final.mask_state, i, t[i].test) == rep.R[i][i]
             for i in range(T))
    report_line(5, ok, f"R diagonal {[rep.R[i][i] for i in range(T)]} == final row {rep.R[-1]}")
    assert ok


def _prune_drop(rep):
    return float(np.mean([p["pre_prune_test_acc"] - p["post_prune_test_acc"] for p in rep.per_task]))


def test_c06_flatness_effect():
    start = time.perf_counter()
    seeds = range(20)
    sharper, drop_better = 0, 0
    rows = []
    for s in seeds:
        sam, plain = bench(s, rho=0.05), bench(s, rho=0.0)
        sharper += sam.mean_sharpness < plain.mean_sharpness
        drop_better += _prune_drop(sam) < _prune_drop(plain)
        rows.append((s, sam.mean_sharpness, plain.mean_sharpness, _prune_drop(sam), _prune_drop(plain)))
    took = time.perf_counter() - start
    ok = sharper >= 16 and drop_better >= 14 and took < 600
    report_line(6, ok, f"SAM sharpness lower in {sharper}/20 (need 16), prune drop smaller in "
                       f"{drop_better}/20 (need 14), {took:.0f}s")
    for r in rows:
        print("      seed %2d  sharp sam %.5f plain %.5f  drop sam %+.4f plain %+.4f" % r)
    assert ok


def test_c07_selection_efficiency():
    seeds = range(5)
    full = [bench(s, inner=1.0, outer=1.0) for s in seeds]
    sel = [bench(s) for s in seeds]
    g_full = sum(p["grad_examples"] for r in full for p in r.per_task)
    g_sel = sum(p["grad_examples"] for r in sel for p in r.per_task)
    reduction = 1 - g_sel / g_full
    degrade = float(np.mean([f.acc_t for f in full]) - np.mean([s.acc_t for s in sel]))
    ok = reduction >= 0.55 and degrade <= 0.03
    report_line(7, ok, f"gradient evaluations -{reduction:.1%} (need >= 55%), "
                       f"Acc_T degradation {degrade:+.4f} (need <= 0.03)")
    assert ok


def test_c08_metric_exactness():
    vals = (training_flops([10, 5], 100, 2, 1.0), capacity(0.8, 0.75, 10), acc_t([[0.8, 0.6]]))
    ok = vals == (60000, 0.278125, 0.7)
    report_line(8, ok, f"flops {vals[0]}, capacity {vals[1]!r}, Acc_T {vals[2]!r}")
    assert ok


def test_c09_rho_sensitivity():
    rhos = (0.01, 0.05, 0.5, 5.0)
    hits = 0
    for s in range(10):
        accs = [bench(s, rho=r).acc_t for r in rhos]
        hits += accs[3] == min(accs) and accs[3] < max(accs)
    ok = hits >= 8
    report_line(9, ok, f"Acc_T at rho=5 is the minimum in {hits}/10 seeds (need 8)")
    assert ok


def test_c10_determinism_and_resume():
    t = tasks()
    spec = benchmark_network(t)
    cfg = benchmark_config(seed=11)
    a = run_sequence(t, spec, cfg).to_json()
    b = run_sequence(t, spec, cfg).to_json()
    saved = []
    run_sequence(t, spec, cfg, stop_after=2, on_task_end=saved.append)
    resumed = run_sequence(t, spec, cfg, resume=ck.loads(ck.dumps(saved[-1]))).to_json()
    ok = a == b and resumed == a
    report_line(10, ok, f"repeat run byte-identical: {a == b}; resumed-from-checkpoint identical: {resumed == a}")
    assert ok


if __name__ == "__main__":
    import sys

    fns = [v for k, v in sorted(globals().items()) if k.startswith("test_c")]
    failed = 0
    for fn in fns:
        try:
            fn()
        except AssertionError:
            failed += 1
    print(f"{len(fns) - failed}/{len(fns)} criteria pass")
    sys.exit(1 if failed else 0)
