"""K-sparse polytope, its linear minimization oracle, and SFW steps.

The oracle returns a vertex: K coordinates at -tau * sign(m), the rest zero.
A Frank-Wolfe step is a convex combination with that vertex, so iterates
never leave the polytope and no projection is needed.
"""
# %%
import itertools

import numpy as np

from esacl.frank_wolfe import KSparsePolytope, MomentumState, contains, lmo, momentum_update, sfw_update

poly = KSparsePolytope(k_frac=0.5, tau=1.0)
m = np.array([3.0, -1.0, 2.0])
v = lmo(m, poly)
print("k_abs for d=3:", poly.k_abs(3), " vertex:", v, " <m, v> =", m @ v)

# %% brute force over all vertices agrees
k = poly.k_abs(3)
best = min(
    sum(m[i] * s for i, s in zip(sub, signs))
    for sub in itertools.combinations(range(3), k)
    for signs in itertools.product((-1.0, 1.0), repeat=k)
)
print("brute-force minimum:", best)

# %% frozen coordinates are skipped
print(lmo(np.array([5.0, -5.0]), KSparsePolytope(1.0, 2.0), trainable=np.array([False, True])))

# %% a trajectory from the origin stays inside C(K, tau)
rng = np.random.default_rng(1)
d = 20
poly = KSparsePolytope(0.1, 2.0)
theta = np.zeros(d)
state = MomentumState.zeros(d, alpha=0.1)
inside = []
for step in range(500):
    state = momentum_update(state, rng.standard_normal(d))
    theta = sfw_update(theta, lmo(state.m, poly), eta=0.05)
    inside.append(contains(poly, theta))
print("inside at every step:", all(inside))
print("L1 %.3f (bound %.1f), Linf %.3f (bound %.1f)" % (
    np.abs(theta).sum(), poly.tau * poly.k_abs(d), np.abs(theta).max(), poly.tau))
