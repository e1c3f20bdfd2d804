import struct
import zlib

import numpy as np
import pytest

from hyperfield.dataset import (
    MAGIC,
    ChecksumError,
    TruncatedFileError,
    VersionMismatchError,
    read_dataset,
    write_dataset,
)
from hyperfield.shapes import FAMILIES_2D, DatasetManifest, generate_dataset


@pytest.fixture
def small_dataset():
    manifest = DatasetManifest(seed=1, dim=2, num_shapes=4, cond_points=32,
                               pool_size=128, family_mix=list(FAMILIES_2D))
    return manifest, generate_dataset(manifest)


def test_round_trip_preserves_everything(tmp_path, small_dataset):
    manifest, samples = small_dataset
    path = tmp_path / "d.hnfd"
    write_dataset(manifest, samples, path)
    m2, s2 = read_dataset(path)
    assert m2 == manifest
    assert len(s2) == len(samples)
    for a, b in zip(samples, s2):
        assert a.shape_id == b.shape_id and a.family == b.family
        assert a.params == b.params
        assert np.array_equal(a.cond_points, b.cond_points)
        assert np.array_equal(a.query_pool.points, b.query_pool.points)
        assert np.array_equal(a.query_pool.labels, b.query_pool.labels)


def test_write_is_deterministic(tmp_path, small_dataset):
    manifest, samples = small_dataset
    p1, p2 = tmp_path / "a.hnfd", tmp_path / "b.hnfd"
    write_dataset(manifest, samples, p1)
    write_dataset(manifest, samples, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_write_read_write_byte_identical(tmp_path, small_dataset):
    manifest, samples = small_dataset
    p1, p2 = tmp_path / "a.hnfd", tmp_path / "b.hnfd"
    write_dataset(manifest, samples, p1)
    m2, s2 = read_dataset(p1)
    write_dataset(m2, s2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_and_version_fields(tmp_path, small_dataset):
    manifest, samples = small_dataset
    path = tmp_path / "d.hnfd"
    write_dataset(manifest, samples, path)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC == b"HNFD"
    (version,) = struct.unpack_from("<I", raw, 4)
    assert version == 1


def test_sample_count_must_match_manifest(tmp_path, small_dataset):
    manifest, samples = small_dataset
    with pytest.raises(ValueError, match="4 shapes"):
        write_dataset(manifest, samples[:2], tmp_path / "d.hnfd")


def test_zero_shape_dataset_round_trips(tmp_path):
    manifest = DatasetManifest(seed=0, dim=2, num_shapes=0, cond_points=8,
                               pool_size=16, family_mix=["circle"])
    path = tmp_path / "empty.hnfd"
    write_dataset(manifest, [], path)
    m2, s2 = read_dataset(path)
    assert m2 == manifest and s2 == []


def test_wrong_magic_rejected(tmp_path):
    path = tmp_path / "bogus.hnfd"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(TruncatedFileError):
        read_dataset(path)


def test_short_file_rejected(tmp_path):
    path = tmp_path / "short.hnfd"
    path.write_bytes(b"HNFD\x01")
    with pytest.raises(TruncatedFileError):
        read_dataset(path)


def test_version_mismatch_rejected(tmp_path, small_dataset):
    manifest, samples = small_dataset
    path = tmp_path / "d.hnfd"
    write_dataset(manifest, samples, path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<I", raw, 4, 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError, match="99"):
        read_dataset(path)


def test_truncated_body_rejected(tmp_path, small_dataset):
    manifest, samples = small_dataset
    path = tmp_path / "d.hnfd"
    write_dataset(manifest, samples, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-100])
    with pytest.raises(TruncatedFileError):
        read_dataset(path)


def test_corrupted_body_rejected(tmp_path, small_dataset):
    manifest, samples = small_dataset
    path = tmp_path / "d.hnfd"
    write_dataset(manifest, samples, path)
    raw = bytearray(path.read_bytes())
    raw[100] ^= 0xFF  # flip bits inside the body
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        read_dataset(path)


def test_checksum_actually_covers_whole_body(tmp_path, small_dataset):
    manifest, samples = small_dataset
    path = tmp_path / "d.hnfd"
    write_dataset(manifest, samples, path)
    raw = path.read_bytes()
    (crc,) = struct.unpack_from("<I", raw, 8)
    assert crc == zlib.crc32(raw[20:])
