import struct

import numpy as np
import pytest

from hyperfield.checkpoint import (
    MAGIC,
    CheckpointError,
    SpecMismatchError,
    load_checkpoint,
    save_checkpoint,
)
from hyperfield.config import RunConfig
from hyperfield.hypernet import HypernetConfig, init_field
from hyperfield.tasknet import TaskNetSpec
from hyperfield.trainer import (STREAM_INIT, AdamState, TrainState, derive_rng)


def make_state(seed=0, iteration=5):
    spec = TaskNetSpec((2, 8, 8, 1))
    cfg = HypernetConfig(T=32, cond_hidden=8, cond_dim=16, time_dim=8,
                         trunk_width=16, trunk_depth=2)
    field = init_field(spec, cfg, derive_rng(seed, STREAM_INIT))
    adam = AdamState.fresh(field.params)
    rng = np.random.default_rng(seed + 1)
    for k in adam.m:
        adam.m[k] = rng.normal(size=adam.m[k].shape)
        adam.v[k] = rng.uniform(size=adam.v[k].shape)
    adam.step = iteration
    run = RunConfig(seed=seed, T=32, task_dims=[2, 8, 8, 1], cond_hidden=8,
                    cond_dim=16, time_dim=8, trunk_width=16, trunk_depth=2,
                    iterations=10)
    return field, TrainState(iteration=iteration, adam=adam), run


def test_save_load_round_trip(tmp_path):
    field, state, run = make_state()
    path = tmp_path / "c.hnf"
    save_checkpoint(path, field, state, run)
    f2, s2, r2 = load_checkpoint(path)
    assert f2.spec == field.spec
    assert f2.config == field.config
    assert np.array_equal(f2.theta0.values, field.theta0.values)
    assert list(f2.params) == list(field.params)  # layout order preserved
    for k in field.params:
        assert np.array_equal(f2.params[k], field.params[k])
        assert np.array_equal(s2.adam.m[k], state.adam.m[k])
        assert np.array_equal(s2.adam.v[k], state.adam.v[k])
    assert s2.iteration == state.iteration
    assert s2.adam.step == state.adam.step
    assert r2 == run


def test_save_load_save_byte_identical(tmp_path):
    field, state, run = make_state()
    p1, p2 = tmp_path / "a.hnf", tmp_path / "b.hnf"
    save_checkpoint(p1, field, state, run)
    f2, s2, r2 = load_checkpoint(p1)
    save_checkpoint(p2, f2, s2, r2)
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_and_rng_scheme(tmp_path):
    field, state, run = make_state(seed=3, iteration=7)
    path = tmp_path / "c.hnf"
    save_checkpoint(path, field, state, run)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC == b"HNF1"
    f2, s2, _ = load_checkpoint(path)
    # resuming uses per-iteration streams: only the iteration index matters
    assert s2.iteration == 7


def test_spec_mismatch_detected_before_loading_blobs(tmp_path):
    field, state, run = make_state()
    path = tmp_path / "c.hnf"
    save_checkpoint(path, field, state, run)
    with pytest.raises(SpecMismatchError, match="dims"):
        load_checkpoint(path, expect_task_dims=(2, 32, 32, 1))
    # matching dims load fine
    load_checkpoint(path, expect_task_dims=(2, 8, 8, 1))


def test_wrong_magic_rejected(tmp_path):
    path = tmp_path / "bad.hnf"
    path.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_version_mismatch_rejected(tmp_path):
    field, state, run = make_state()
    path = tmp_path / "c.hnf"
    save_checkpoint(path, field, state, run)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<I", raw, 4, 42)
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version 42"):
        load_checkpoint(path)


def test_corruption_rejected(tmp_path):
    field, state, run = make_state()
    path = tmp_path / "c.hnf"
    save_checkpoint(path, field, state, run)
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0x40  # flip a bit inside an adam moment blob
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)


def test_truncation_rejected(tmp_path):
    field, state, run = make_state()
    path = tmp_path / "c.hnf"
    save_checkpoint(path, field, state, run)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
