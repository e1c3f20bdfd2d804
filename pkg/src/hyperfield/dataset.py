"""Dataset persistence: magic "HNFD", version, CRC-checked body holding the
JSON manifest plus per-sample binary records (little-endian float64)."""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .shapes import DatasetManifest, ShapeSample
from .tasknet import QueryBatch

MAGIC = b"HNFD"
FORMAT_VERSION = 1


class DatasetError(IOError):
    pass


class VersionMismatchError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    pass


class ChecksumError(DatasetError):
    pass


def _canon_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _pack_array(arr: np.ndarray) -> bytes:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return struct.pack("<I", len(a.shape)) + struct.pack(
        f"<{len(a.shape)}Q", *a.shape) + a.tobytes()


def _unpack_array(buf: memoryview, off: int):
    (ndim,) = struct.unpack_from("<I", buf, off)
    off += 4
    shape = struct.unpack_from(f"<{ndim}Q", buf, off)
    off += 8 * ndim
    n = int(np.prod(shape)) if ndim else 1
    arr = np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape)
    off += 8 * n
    return np.ascontiguousarray(arr.astype(np.float64)), off


def _sample_record(sample: ShapeSample) -> bytes:
    header = _canon_json({
        "shape_id": sample.shape_id,
        "family": sample.family,
        "params": sample.params,
    })
    body = (
        _pack_array(sample.cond_points)
        + _pack_array(sample.query_pool.points)
        + _pack_array(sample.query_pool.labels)
    )
    return struct.pack("<I", len(header)) + header + body


def write_dataset(manifest: DatasetManifest, samples, path) -> None:
    if len(samples) != manifest.num_shapes:
        raise ValueError(
            f"manifest says {manifest.num_shapes} shapes, got {len(samples)}")
    mbytes = _canon_json(manifest.to_dict())
    body = struct.pack("<I", len(mbytes)) + mbytes
    for s in samples:
        body += _sample_record(s)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", zlib.crc32(body)))
        f.write(struct.pack("<Q", len(body)))
        f.write(body)


def read_dataset(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 20 or raw[:4] != MAGIC:
        raise TruncatedFileError(f"{path}: missing or short HNFD header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (crc,) = struct.unpack_from("<I", raw, 8)
    (body_len,) = struct.unpack_from("<Q", raw, 12)
    body = raw[20:]
    if len(body) != body_len:
        raise TruncatedFileError(
            f"{path}: body is {len(body)} bytes, header says {body_len}")
    if zlib.crc32(body) != crc:
        raise ChecksumError(f"{path}: body checksum mismatch")

    view = memoryview(body)
    (mlen,) = struct.unpack_from("<I", view, 0)
    off = 4
    manifest = DatasetManifest.from_dict(
        json.loads(bytes(view[off:off + mlen]).decode("utf-8")))
    off += mlen
    samples = []
    for _ in range(manifest.num_shapes):
        (hlen,) = struct.unpack_from("<I", view, off)
        off += 4
        header = json.loads(bytes(view[off:off + hlen]).decode("utf-8"))
        off += hlen
        cond, off = _unpack_array(view, off)
        pts, off = _unpack_array(view, off)
        labels, off = _unpack_array(view, off)
        samples.append(ShapeSample(
            shape_id=int(header["shape_id"]),
            family=header["family"],
            params=header["params"],
            cond_points=cond,
            query_pool=QueryBatch(pts, labels),
        ))
    return manifest, samples
