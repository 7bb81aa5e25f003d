import struct

import numpy as np
import pytest

from esacl import checkpoint as ck
from esacl.data import gen_split_gaussians
from esacl.runner import TrainConfig, network_for, run_sequence

CFG = TrainConfig(epochs_per_task=4, probe_dirs=8, eta=0.05, seed=3)


@pytest.fixture(scope="module")
def run():
    tasks = gen_split_gaussians(4, 2, 4, 30, 3.0, seed=1)
    spec = network_for(tasks, hidden=(7,))
    snaps = []
    report = run_sequence(tasks, spec, CFG, on_task_end=snaps.append)
    return tasks, spec, snaps, report


def test_round_trip_exact(run, tmp_path):
    _, _, snaps, _ = run
    for s in snaps:
        back = ck.loads(ck.dumps(s))
        assert back == s
        assert back.params.tobytes() == s.params.tobytes()
        assert back.rng().random() == s.rng().random()
    ck.save(snaps[1], tmp_path / "c.esacl")
    assert ck.load(tmp_path / "c.esacl") == snaps[1]


def test_layout(run):
    _, spec, snaps, _ = run
    raw = ck.dumps(snaps[0])
    assert raw[:6] == b"ESACL1"
    version, hlen = struct.unpack_from("<HI", raw, 6)
    assert version == ck.FORMAT_VERSION
    params = np.frombuffer(raw[12 + hlen:12 + hlen + 8 * spec.size], dtype="<f8")
    assert np.array_equal(params, snaps[0].params)


def test_corrupt_inputs(run, tmp_path):
    _, _, snaps, _ = run
    raw = ck.dumps(snaps[0])
    with pytest.raises(ck.CheckpointError):
        ck.loads(b"NOTACK" + raw[6:])
    with pytest.raises(ck.CheckpointError):
        ck.loads(raw[:-5])
    with pytest.raises(ck.CheckpointError):
        ck.loads(raw + b"\x00")
    with pytest.raises(FileNotFoundError):
        ck.load(tmp_path / "absent.esacl")


def test_resume_reproduces_uninterrupted_run(run, tmp_path):
    tasks, spec, snaps, report = run
    for k in (1, 2, 3):
        ck.save(snaps[k - 1], tmp_path / "mid.esacl")
        resumed = run_sequence(tasks, spec, CFG, resume=ck.load(tmp_path / "mid.esacl"))
        assert resumed.to_json() == report.to_json()


def test_stop_after_then_resume():
    tasks = gen_split_gaussians(3, 2, 4, 30, 3.0, seed=2)
    spec = network_for(tasks)
    full = run_sequence(tasks, spec, CFG)
    saved = []
    partial = run_sequence(tasks, spec, CFG, stop_after=2, on_task_end=saved.append)
    assert len(partial.R) == 2
    resumed = run_sequence(tasks, spec, CFG, resume=ck.loads(ck.dumps(saved[-1])))
    assert resumed.to_json() == full.to_json()
