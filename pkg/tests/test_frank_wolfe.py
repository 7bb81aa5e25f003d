import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esacl.frank_wolfe import KSparsePolytope, MomentumState, contains, lmo, momentum_update, sfw_update


def vertices(d, k, tau, allowed=None):
    """Every vertex of C(k, tau): k-subsets of the allowed coordinates with all sign patterns."""
    coords = range(d) if allowed is None else np.flatnonzero(allowed)
    for subset in itertools.combinations(coords, k):
        for signs in itertools.product((-1.0, 1.0), repeat=k):
            v = np.zeros(d)
            v[list(subset)] = tau * np.array(signs)
            yield v


def inner(m, v):
    return math.fsum(float(a) * float(b) for a, b in zip(m, v))


def test_lmo_matches_bruteforce_small_example():
    m = np.array([3.0, -1.0, 2.0])
    poly = KSparsePolytope(0.5, 1.0)
    assert poly.k_abs(3) == 2
    v = lmo(m, poly)
    assert v.tolist() == [-1.0, 0.0, -1.0]
    assert inner(m, v) == min(inner(m, u) for u in vertices(3, 2, 1.0))


def test_lmo_zero_vector_conventions():
    v = lmo(np.zeros(3), KSparsePolytope(1 / 3, 1.0))
    assert v.tolist() == [-1.0, 0.0, 0.0]


def test_lmo_excludes_frozen():
    v = lmo(np.array([5.0, -5.0]), KSparsePolytope(0.5, 2.0), trainable=np.array([False, True]))
    assert v.tolist() == [0.0, 2.0]


def test_lmo_no_trainable_raises():
    with pytest.raises(ValueError, match="no trainable coordinates"):
        lmo(np.ones(3), KSparsePolytope(0.5, 1.0), trainable=np.zeros(3, bool))


def test_k_abs_ceil_and_floor():
    assert KSparsePolytope(0.05, 1.0).k_abs(10) == 1
    assert KSparsePolytope(0.05, 1.0).k_abs(100) == 5
    assert KSparsePolytope(0.3, 1.0).k_abs(10) == 3  # 0.3*10 is 3.0000000000000004 in floats
    assert KSparsePolytope(1.0, 1.0).k_abs(7) == 7
    with pytest.raises(ValueError):
        KSparsePolytope(0.0, 1.0)
    with pytest.raises(ValueError):
        KSparsePolytope(0.5, 0.0)


def test_lmo_optimal_over_enumerated_vertices():
    rng = np.random.default_rng(0)
    for trial in range(500):
        d = int(rng.integers(1, 9))
        k_frac = float(rng.uniform(0.01, 1.0))
        tau = float(rng.uniform(0.1, 5.0))
        m = rng.standard_normal(d)
        if trial % 5 == 0:
            m = np.round(m)  # exercise ties and zeros
        allowed = rng.random(d) > 0.3
        if not allowed.any():
            allowed[0] = True
        poly = KSparsePolytope(k_frac, tau)
        k = poly.k_abs(int(allowed.sum()))
        v = lmo(m, poly, allowed)
        best = min(inner(m, u) for u in vertices(d, k, tau, allowed))
        assert inner(m, v) == best
        assert np.count_nonzero(v) == k
        assert np.all(np.abs(v[v != 0]) == tau)
        assert np.all(v[~allowed] == 0.0)


@settings(max_examples=100, deadline=None)
@given(m=st.lists(st.floats(-10, 10), min_size=1, max_size=12), k_frac=st.floats(0.01, 1.0))
def test_lmo_deterministic_and_sized(m, k_frac):
    m = np.array(m)
    poly = KSparsePolytope(k_frac, 1.5)
    v = lmo(m, poly)
    assert v.tobytes() == lmo(m.copy(), poly).tobytes()
    assert np.count_nonzero(v) == poly.k_abs(m.size)


def test_momentum_update_examples():
    s = momentum_update(MomentumState.zeros(2, 0.1), np.array([1.0, -2.0]))
    assert s.m.tolist() == [0.1, -0.2]
    s0 = MomentumState(np.array([1.0, 2.0]), 0.0)
    assert momentum_update(s0, np.array([5.0, 5.0])).m.tolist() == [1.0, 2.0]
    rng = np.random.default_rng(1)
    g1, g2, m0 = rng.standard_normal((3, 4))
    two = momentum_update(momentum_update(MomentumState(m0, 0.25), g1), g2)
    np.testing.assert_allclose(two.m, m0 + 0.25 * (g1 + g2), rtol=1e-14)
    with pytest.raises(ValueError):
        momentum_update(MomentumState.zeros(2, 0.1), np.ones(3))


def test_momentum_decay_option():
    s = momentum_update(MomentumState(np.array([1.0]), 1.0, decay=0.5), np.array([1.0]))
    assert s.m.tolist() == [1.5]


def test_sfw_update_examples():
    assert sfw_update(np.array([1.0, 1.0]), np.array([-1.0, 0.0]), 0.5).tolist() == [0.0, 0.5]
    th = np.array([0.3, -2.0])
    assert sfw_update(th, np.array([9.0, 9.0]), 0.0).tolist() == th.tolist()
    out = sfw_update(th, np.array([1.0, 1.0]), 1.0, trainable=np.array([True, False]))
    assert out.tolist() == [1.0, -2.0]
    for bad in (-0.1, 1.1):
        with pytest.raises(ValueError):
            sfw_update(th, th, bad)


def test_contains_examples():
    tau = 2.0
    poly = KSparsePolytope(1 / 3, tau)
    assert contains(poly, np.array([tau, 0.0, 0.0]))
    assert not contains(KSparsePolytope(0.5, tau), np.array([tau, tau]))
    assert not contains(poly, np.array([tau + 1e-6, 0.0, 0.0]))


def test_convex_combinations_of_vertices_are_inside():
    rng = np.random.default_rng(2)
    for _ in range(200):
        d = int(rng.integers(1, 9))
        poly = KSparsePolytope(float(rng.uniform(0.05, 1)), float(rng.uniform(0.5, 4)))
        k = poly.k_abs(d)
        verts = list(vertices(d, k, poly.tau))
        pick = rng.choice(len(verts), size=min(5, len(verts)), replace=False)
        w = rng.dirichlet(np.ones(pick.size))
        theta = sum(wi * verts[j] for wi, j in zip(w, pick))
        assert contains(poly, theta)


def test_sfw_step_from_inside_stays_inside():
    rng = np.random.default_rng(3)
    poly = KSparsePolytope(0.25, 1.0)
    theta = np.zeros(8)
    for _ in range(300):
        theta = sfw_update(theta, lmo(rng.standard_normal(8), poly), float(rng.uniform(0, 1)))
        assert contains(poly, theta)
