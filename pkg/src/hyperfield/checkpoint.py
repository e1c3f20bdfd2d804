"""Versioned checkpoint serialization: magic "HNF1", JSON header, then
little-endian float64 blobs for theta0, the field parameters, and the outer
optimizer moments. save -> load -> save is byte-identical."""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .config import RunConfig
from .hypernet import HypernetConfig, HypernetField
from .tasknet import FlatWeights, TaskNetSpec
from .trainer import AdamState, TrainState

MAGIC = b"HNF1"
FORMAT_VERSION = 1


class CheckpointError(IOError):
    pass


class SpecMismatchError(CheckpointError):
    """Checkpoint task-net dims differ from what the caller expects."""


def _canon_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, field: HypernetField, state: TrainState,
                    run_config: RunConfig) -> None:
    layout = [[name, list(arr.shape)] for name, arr in field.params.items()]
    header = _canon_json({
        "format_version": FORMAT_VERSION,
        "config": run_config.to_dict(),
        "task_dims": list(field.spec.layer_dims),
        "hypernet": {
            "T": field.config.T,
            "cond_hidden": field.config.cond_hidden,
            "cond_dim": field.config.cond_dim,
            "time_dim": field.config.time_dim,
            "trunk_width": field.config.trunk_width,
            "trunk_depth": field.config.trunk_depth,
        },
        "param_layout": layout,
        "iteration": state.iteration,
        "adam_step": state.adam.step,
        "rng_state": {
            "scheme": "seedseq-per-iteration",
            "seed": run_config.seed,
            "next_iteration": state.iteration,
        },
    })
    blobs = [np.ascontiguousarray(field.theta0.values, dtype="<f8").tobytes()]
    for name, _ in layout:
        blobs.append(np.ascontiguousarray(field.params[name], dtype="<f8").tobytes())
    for name, _ in layout:
        blobs.append(np.ascontiguousarray(state.adam.m[name], dtype="<f8").tobytes())
    for name, _ in layout:
        blobs.append(np.ascontiguousarray(state.adam.v[name], dtype="<f8").tobytes())
    body = struct.pack("<I", len(header)) + header + b"".join(blobs)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", zlib.crc32(body)))
        f.write(struct.pack("<Q", len(body)))
        f.write(body)


def load_checkpoint(path, expect_task_dims=None):
    """Returns (field, state, run_config). Validates spec dims from the
    header before allocating any parameter or optimizer arrays."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 20 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: missing or short HNF1 header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {version}, expected {FORMAT_VERSION}")
    (crc,) = struct.unpack_from("<I", raw, 8)
    (body_len,) = struct.unpack_from("<Q", raw, 12)
    body = raw[20:]
    if len(body) != body_len:
        raise CheckpointError(
            f"{path}: body is {len(body)} bytes, header says {body_len}")
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch")

    (hlen,) = struct.unpack_from("<I", body, 0)
    header = json.loads(body[4:4 + hlen].decode("utf-8"))
    task_dims = tuple(header["task_dims"])
    if expect_task_dims is not None and tuple(expect_task_dims) != task_dims:
        raise SpecMismatchError(
            f"{path}: checkpoint task dims {task_dims} != expected "
            f"{tuple(expect_task_dims)}")

    spec = TaskNetSpec(task_dims)
    hcfg = HypernetConfig(**header["hypernet"])
    run_config = RunConfig(**header["config"])

    off = 4 + hlen
    view = memoryview(body)

    def take(shape):
        nonlocal off
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(view, dtype="<f8", count=n, offset=off)
        off += 8 * n
        return np.ascontiguousarray(arr.astype(np.float64)).reshape(shape)

    from .tasknet import param_count
    theta0 = FlatWeights(spec, take([param_count(spec)]))
    layout = header["param_layout"]
    params = {name: take(shape) for name, shape in layout}
    m = {name: take(shape) for name, shape in layout}
    v = {name: take(shape) for name, shape in layout}
    field = HypernetField(spec=spec, config=hcfg, theta0=theta0, params=params)
    state = TrainState(
        iteration=int(header["iteration"]),
        adam=AdamState(m=m, v=v, step=int(header["adam_step"])),
    )
    return field, state, run_config
