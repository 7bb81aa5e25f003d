"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"ESACL1"                 magic
    u16                       format version
    u32 + bytes               JSON header (spec, sizes, optimizer scalars, history)
    f64[d]                    params
    f64[d]                    momentum
    u8[ceil(d/8)] * (2 + T)   trainable, frozen, then one mask per finished task
                              (bit-packed, little bit order)
    u32 + bytes               RNG state blob (JSON of the PCG64 state)
"""
from __future__ import annotations

import io
import json
import os
import struct
from pathlib import Path

import numpy as np

from .frank_wolfe import MomentumState
from .nn import NetworkSpec
from .runner import Checkpoint, MaskState

__all__ = ["MAGIC", "FORMAT_VERSION", "CheckpointError", "dumps", "loads", "save", "load"]

MAGIC = b"ESACL1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack(mask):
    return np.packbits(np.asarray(mask, dtype=bool), bitorder="little").tobytes()


def _unpack(raw, d):
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    return bits[:d].astype(bool)


def dumps(ckpt: Checkpoint) -> bytes:
    d = ckpt.params.shape[0]
    header = {
        "spec": {"layer_dims": list(ckpt.spec.layer_dims), "activation": ckpt.spec.activation,
                 "heads": ckpt.spec.heads},
        "d": d,
        "completed_tasks": ckpt.completed_tasks,
        "n_task_masks": len(ckpt.mask_state.per_task_masks),
        "alpha": ckpt.optimizer.alpha,
        "decay": ckpt.optimizer.decay,
        "history": ckpt.history,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    rbytes = json.dumps(ckpt.rng_state, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", FORMAT_VERSION, len(hbytes)))
    buf.write(hbytes)
    buf.write(np.asarray(ckpt.params, dtype="<f8").tobytes())
    buf.write(np.asarray(ckpt.optimizer.m, dtype="<f8").tobytes())
    for m in [ckpt.mask_state.trainable, ckpt.mask_state.frozen, *ckpt.mask_state.per_task_masks]:
        buf.write(_pack(m))
    buf.write(struct.pack("<I", len(rbytes)))
    buf.write(rbytes)
    return buf.getvalue()


def loads(raw: bytes) -> Checkpoint:
    view = memoryview(raw)
    if bytes(view[:6]) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    try:
        version, hlen = struct.unpack_from("<HI", view, 6)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 12
        header = json.loads(bytes(view[pos:pos + hlen]).decode("utf-8"))
        pos += hlen
        d = header["d"]
        params = np.frombuffer(view[pos:pos + 8 * d], dtype="<f8").astype(np.float64)
        pos += 8 * d
        momentum = np.frombuffer(view[pos:pos + 8 * d], dtype="<f8").astype(np.float64)
        pos += 8 * d
        nbytes = (d + 7) // 8
        masks = []
        for _ in range(2 + header["n_task_masks"]):
            masks.append(_unpack(view[pos:pos + nbytes], d))
            pos += nbytes
        (rlen,) = struct.unpack_from("<I", view, pos)
        pos += 4
        rng_state = json.loads(bytes(view[pos:pos + rlen]).decode("utf-8"))
        pos += rlen
    except (struct.error, KeyError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if pos != len(raw) or params.shape != (d,) or momentum.shape != (d,):
        raise CheckpointError("corrupt checkpoint: size mismatch")
    spec = NetworkSpec(tuple(header["spec"]["layer_dims"]), header["spec"]["activation"],
                       header["spec"]["heads"])
    if spec.size != d:
        raise CheckpointError("corrupt checkpoint: spec does not match parameter count")
    return Checkpoint(
        spec=spec,
        params=params,
        mask_state=MaskState(masks[0], masks[1], masks[2:]),
        optimizer=MomentumState(momentum, header["alpha"], header["decay"]),
        completed_tasks=header["completed_tasks"],
        rng_state=rng_state,
        history=header["history"],
    )


def save(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(dumps(ckpt))
    os.replace(tmp, path)


def load(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads(path.read_bytes())
