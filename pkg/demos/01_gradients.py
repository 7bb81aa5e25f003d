"""Network, loss and gradients.

A small multi-head MLP whose weights live in one flat vector. The analytic
gradient is checked against central differences, and masked weights are
shown to be inert.
"""
# %%
import numpy as np

from esacl.nn import (Batch, NetworkSpec, batch_loss, finite_diff_grad, forward, grad, init_params,
                      max_relative_error)

rng = np.random.default_rng(0)
spec = NetworkSpec((4, 8, 3), activation="tanh", heads=2)
params = init_params(spec, rng)
print("parameters:", spec.size, "layer shapes:", spec.layer_shapes())

# %% a batch for head 1
batch = Batch(rng.standard_normal((6, 4)), rng.integers(0, 3, 6), task_id=1)
mask = np.ones(spec.size, dtype=bool)
print("logits\n", forward(spec, params, mask, batch).round(3))
print("loss", batch_loss(spec, params, mask, batch))

# %% analytic vs numeric gradient
g = grad(spec, params, mask, batch)
fd = finite_diff_grad(spec, params, mask, batch, h=1e-5)
print("max relative error", max_relative_error(g, fd))

# head 0 is not on this batch's path, so its gradient is exactly zero
head0 = spec.layer_of_coordinate() == spec.path_layers(0)[-1]
print("gradient mass on head 0:", np.abs(g[head0]).sum())

# %% masked weights
mask = rng.random(spec.size) > 0.3
shifted = params.copy()
shifted[~mask] += 100.0
print("loss unchanged by masked weights:",
      batch_loss(spec, params, mask, batch) == batch_loss(spec, shifted, mask, batch))
print("gradient zero on masked weights:", np.all(grad(spec, params, mask, batch)[~mask] == 0))
