"""Stop a run midway, save a checkpoint, resume, and get the same report."""
# %%
import tempfile
from pathlib import Path

from esacl import checkpoint
from esacl.data import gen_split_gaussians
from esacl.runner import TrainConfig, network_for, run_sequence

tasks = gen_split_gaussians(4, 2, 6, 60, 3.0, seed=7)
spec = network_for(tasks, hidden=(16,))
cfg = TrainConfig(epochs_per_task=10, probe_dirs=16, seed=1)

full = run_sequence(tasks, spec, cfg)

# %%
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "run.esacl"
    saved = []
    run_sequence(tasks, spec, cfg, stop_after=2, on_task_end=saved.append)
    checkpoint.save(saved[-1], path)
    print("checkpoint bytes:", path.stat().st_size, "magic:", path.read_bytes()[:6])
    resumed = run_sequence(tasks, spec, cfg, resume=checkpoint.load(path))

print("identical report:", resumed.to_json() == full.to_json())
