"""Efficiency accounting: training FLOPs, capacity and memory."""
# %%
import numpy as np

from esacl.metrics import acc_t, capacity, forward_macs, memory_footprint, training_flops
from esacl.nn import NetworkSpec
from esacl.runner import MaskState

print("FLOPs, 10->5 layer, 100 examples, 2 epochs:", training_flops([10, 5], 100, 2))
print("same at half density:", training_flops([10, 5], 100, 2, 0.5))
print("forward multiply-adds of 10-32-2 at densities (0.2, 1):", forward_macs([10, 32, 2], [0.2, 1.0]))

# %% capacity with and without mask storage
for T in (1, 5, 10, 20):
    print("T=%-3d capacity %.6f  weights only %.2f" % (T, capacity(0.8, 0.75, T), capacity(0.8, 1.0, T)))

# %% memory breakdown
spec = NetworkSpec((10, 32, 2), heads=5)
ms = MaskState.fresh(spec.size)
ms.per_task_masks.extend(np.ones(spec.size, bool) for _ in range(5))
print(memory_footprint(spec, ms, batch_size=32))
print("Acc_T of final row [0.8, 0.6]:", acc_t([[0.8, 0.6]]))
