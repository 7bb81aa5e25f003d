"""Loss-ranked data selection.

Support selection keeps the hardest examples for the ascent step; redundancy
elimination keeps the hardest ones for the descent step. Loss stands in for
per-example gradient size, which we check directly here.
"""
# %%
import numpy as np

from esacl.nn import Batch, NetworkSpec, forward, init_params, per_example_grad_norms, per_example_losses
from esacl.selection import SelectionConfig, eliminate_redundant, select_support, top_j_indices

print(top_j_indices([0.1, 0.9, 0.5], 2), top_j_indices([0.3, 0.3, 0.3], 2))

# %%
rng = np.random.default_rng(0)
spec = NetworkSpec((6, 12, 2))
params = init_params(spec, rng)
mask = np.ones(spec.size, dtype=bool)
batch = Batch(rng.standard_normal((32, 6)), rng.integers(0, 2, 32))
cfg = SelectionConfig(inner_frac=0.4, outer_frac=0.4)

support = select_support(spec, params, mask, batch, cfg)
outer = eliminate_redundant(spec, params, mask, support, cfg)
print("batch", len(batch), "-> support", len(support), "-> descent subset", len(outer))

# %% does loss track gradient norm?
losses = per_example_losses(forward(spec, params, mask, batch), batch.labels)
norms = per_example_grad_norms(spec, params, mask, batch)
kept = top_j_indices(losses, 13)
dropped = np.setdiff1d(np.arange(32), kept)
print("mean grad norm kept %.4f dropped %.4f" % (norms[kept].mean(), norms[dropped].mean()))
print("rank correlation %.3f" % np.corrcoef(np.argsort(np.argsort(losses)), np.argsort(np.argsort(norms)))[0, 1])
