"""Sharpness-aware gradients and the sharpness probe.

The SAM gradient is the ordinary gradient taken after an ascent step of
length rho along the current gradient. The probe measures the worst loss
increase over random directions of length rho.
"""
# %%
import numpy as np

from esacl.nn import Batch, NetworkSpec, grad, init_params
from esacl.sam import perturbation, sam_direction, sam_gradient, sharpness_probe

eps, degenerate = perturbation(np.array([3.0, 4.0]), rho=0.05)
print("eps", eps, "norm", np.linalg.norm(eps), "degenerate", degenerate)

# %% one-dimensional check: loss theta^2 at theta = 1, rho = 0.1
print("quadratic SAM gradient:", sam_direction(lambda t: 2 * t, np.array([1.0]), 0.1))

# %% on a network: equals the two-step recipe exactly
rng = np.random.default_rng(0)
spec = NetworkSpec((5, 16, 3))
params = init_params(spec, rng)
batch = Batch(rng.standard_normal((32, 5)), rng.integers(0, 3, 32))
mask = np.ones(spec.size, dtype=bool)
g_sam = sam_gradient(spec, params, mask, batch, rho=0.05)
e, _ = perturbation(grad(spec, params, mask, batch), 0.05)
print("matches grad at shifted params:", np.array_equal(g_sam, grad(spec, params + e, mask, batch)))

# %% probe grows with the radius
for rho in (0.01, 0.1, 1.0):
    print("rho %-5s probe %.5f" % (rho, sharpness_probe(spec, params, mask, batch, rho, n_dirs=64, seed=0)))
