"""Synthetic shapes with exact occupancy oracles, boundary point clouds,
and query-point pools (half uniform, half near-surface)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tasknet import QueryBatch

DOMAIN_LO, DOMAIN_HI = -1.0, 1.0
SHAPE_BOX = 0.9            # shapes stay inside [-0.9, 0.9]^d
NEAR_SURFACE_BAND = 0.05   # half-width of the near-surface query band

FAMILIES_2D = ("circle", "ellipse", "polygon", "fourier-blob")
FAMILIES_3D = ("sphere", "box", "capsule")


class UnknownFamilyError(ValueError):
    pass


class ShapeGenerationError(RuntimeError):
    """Rejection sampling failed to place a shape inside the domain box."""


@dataclass
class ShapeSample:
    shape_id: int
    family: str
    params: dict
    cond_points: np.ndarray      # (M, d) boundary point cloud
    query_pool: QueryBatch       # P points, half uniform, half near-surface

    @property
    def dim(self) -> int:
        return self.cond_points.shape[1]


@dataclass
class DatasetManifest:
    seed: int
    dim: int
    num_shapes: int
    cond_points: int
    pool_size: int
    family_mix: list
    format_version: int = 1

    def to_dict(self):
        return {
            "seed": self.seed,
            "dim": self.dim,
            "num_shapes": self.num_shapes,
            "cond_points": self.cond_points,
            "pool_size": self.pool_size,
            "family_mix": list(self.family_mix),
            "format_version": self.format_version,
        }

    @staticmethod
    def from_dict(d):
        return DatasetManifest(
            seed=int(d["seed"]), dim=int(d["dim"]),
            num_shapes=int(d["num_shapes"]), cond_points=int(d["cond_points"]),
            pool_size=int(d["pool_size"]), family_mix=list(d["family_mix"]),
            format_version=int(d["format_version"]),
        )


def family_dim(family: str) -> int:
    if family in FAMILIES_2D:
        return 2
    if family in FAMILIES_3D:
        return 3
    raise UnknownFamilyError(f"unknown shape family: {family!r}")


# ---------------------------------------------------------------------------
# Analytic occupancy
# ---------------------------------------------------------------------------

def _blob_radius(params, angles):
    r = np.full_like(angles, params["r0"])
    for k, (a, psi) in enumerate(zip(params["amps"], params["phases"]), start=1):
        r = r + a * np.cos(k * angles + psi)
    return r


def analytic_occupancy(sample_or_params, points: np.ndarray) -> np.ndarray:
    """Exact interior indicator in {0,1}; boundary counts as interior."""
    if isinstance(sample_or_params, ShapeSample):
        family, params = sample_or_params.family, sample_or_params.params
    else:
        family, params = sample_or_params
    p = np.asarray(points, dtype=np.float64)
    if family == "circle":
        c = np.asarray(params["center"])
        inside = np.linalg.norm(p - c, axis=1) <= params["radius"]
    elif family == "ellipse":
        c = np.asarray(params["center"])
        th = params["angle"]
        rot = np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]])
        q = (p - c) @ rot.T
        inside = (q[:, 0] / params["a"]) ** 2 + (q[:, 1] / params["b"]) ** 2 <= 1.0
    elif family == "polygon":
        verts = np.asarray(params["vertices"])  # convex, counter-clockwise
        inside = np.ones(len(p), dtype=bool)
        n = len(verts)
        for i in range(n):
            a, b = verts[i], verts[(i + 1) % n]
            edge = b - a
            # interior is to the left of each CCW edge
            cross = edge[0] * (p[:, 1] - a[1]) - edge[1] * (p[:, 0] - a[0])
            inside &= cross >= 0.0
    elif family == "fourier-blob":
        c = np.asarray(params["center"])
        q = p - c
        ang = np.arctan2(q[:, 1], q[:, 0])
        inside = np.linalg.norm(q, axis=1) <= _blob_radius(params, ang)
    elif family == "sphere":
        c = np.asarray(params["center"])
        inside = np.linalg.norm(p - c, axis=1) <= params["radius"]
    elif family == "box":
        c = np.asarray(params["center"])
        h = np.asarray(params["half_extents"])
        inside = np.all(np.abs(p - c) <= h, axis=1)
    elif family == "capsule":
        a = np.asarray(params["a"])
        b = np.asarray(params["b"])
        ab = b - a
        tt = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
        closest = a + tt[:, None] * ab
        inside = np.linalg.norm(p - closest, axis=1) <= params["radius"]
    else:
        raise UnknownFamilyError(f"unknown shape family: {family!r}")
    return inside.astype(np.float64)


def interior_fraction(family: str, params: dict) -> float:
    """Analytic interior area (2D) or volume (3D) fraction of [-1,1]^d."""
    if family == "circle":
        return np.pi * params["radius"] ** 2 / 4.0
    if family == "ellipse":
        return np.pi * params["a"] * params["b"] / 4.0
    if family == "polygon":
        v = np.asarray(params["vertices"])
        x, y = v[:, 0], v[:, 1]
        area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        return area / 4.0
    if family == "fourier-blob":
        # area = 1/2 int r(phi)^2 dphi; cross terms integrate to zero
        r0 = params["r0"]
        amps = np.asarray(params["amps"])
        area = np.pi * r0 ** 2 + 0.5 * np.pi * np.sum(amps ** 2)
        return area / 4.0
    if family == "sphere":
        return (4.0 / 3.0) * np.pi * params["radius"] ** 3 / 8.0
    if family == "box":
        h = np.asarray(params["half_extents"])
        return float(np.prod(2.0 * h)) / 8.0
    if family == "capsule":
        a = np.asarray(params["a"])
        b = np.asarray(params["b"])
        r = params["radius"]
        length = float(np.linalg.norm(b - a))
        vol = np.pi * r ** 2 * length + (4.0 / 3.0) * np.pi * r ** 3
        return vol / 8.0
    raise UnknownFamilyError(f"unknown shape family: {family!r}")


# ---------------------------------------------------------------------------
# Boundary geometry (2D via dense polylines; 3D analytic)
# ---------------------------------------------------------------------------

_POLYLINE_SEGMENTS = 4096


def boundary_polyline(family: str, params: dict, segments: int = _POLYLINE_SEGMENTS):
    """Dense closed polyline (V, 2) tracing a 2D shape's boundary."""
    if family == "circle":
        t = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
        c = np.asarray(params["center"])
        return c + params["radius"] * np.stack([np.cos(t), np.sin(t)], axis=1)
    if family == "ellipse":
        t = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
        th = params["angle"]
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        pts = np.stack([params["a"] * np.cos(t), params["b"] * np.sin(t)], axis=1)
        return np.asarray(params["center"]) + pts @ rot.T
    if family == "polygon":
        return np.asarray(params["vertices"], dtype=np.float64)
    if family == "fourier-blob":
        t = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
        r = _blob_radius(params, t)
        return np.asarray(params["center"]) + np.stack(
            [r * np.cos(t), r * np.sin(t)], axis=1)
    raise UnknownFamilyError(f"no 2D boundary polyline for family {family!r}")


def _sample_on_polyline(poly: np.ndarray, n: int, rng):
    """n points uniform by arclength on a closed polyline, with unit normals."""
    seg_a = poly
    seg_b = np.roll(poly, -1, axis=0)
    seg_vec = seg_b - seg_a
    seg_len = np.linalg.norm(seg_vec, axis=1)
    cum = np.cumsum(seg_len)
    total = cum[-1]
    s = rng.uniform(0.0, total, size=n)
    idx = np.searchsorted(cum, s)
    frac = (s - (cum[idx] - seg_len[idx])) / seg_len[idx]
    pts = seg_a[idx] + frac[:, None] * seg_vec[idx]
    tang = seg_vec[idx] / seg_len[idx][:, None]
    normals = np.stack([tang[:, 1], -tang[:, 0]], axis=1)  # outward for CCW
    return pts, normals


def _surface_points_3d(family: str, params: dict, n: int, rng):
    if family == "sphere":
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return np.asarray(params["center"]) + params["radius"] * v
    if family == "box":
        c = np.asarray(params["center"])
        h = np.asarray(params["half_extents"])
        areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]])
        face_axis = rng.choice(3, size=n, p=areas / areas.sum())
        side = rng.choice([-1.0, 1.0], size=n)
        pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * h
        pts[np.arange(n), face_axis] = side * h[face_axis]
        return c + pts
    if family == "capsule":
        a = np.asarray(params["a"])
        b = np.asarray(params["b"])
        r = params["radius"]
        length = float(np.linalg.norm(b - a))
        area_cyl = 2.0 * np.pi * r * length
        area_caps = 4.0 * np.pi * r ** 2
        on_cyl = rng.uniform(size=n) < area_cyl / (area_cyl + area_caps)
        axis = (b - a) / length
        # orthonormal frame around the axis
        helper = np.array([1.0, 0.0, 0.0])
        if abs(axis @ helper) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        u = np.cross(axis, helper)
        u /= np.linalg.norm(u)
        w = np.cross(axis, u)
        pts = np.empty((n, 3))
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        tpos = rng.uniform(0.0, 1.0, size=n)
        cyl = a + tpos[:, None] * (b - a) + r * (
            np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * w)
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        toward_b = (v @ axis) >= 0
        centers = np.where(toward_b[:, None], b, a)
        cap = centers + r * v
        pts[on_cyl] = cyl[on_cyl]
        pts[~on_cyl] = cap[~on_cyl]
        return pts
    raise UnknownFamilyError(f"no 3D surface sampler for family {family!r}")


def surface_points(family: str, params: dict, n: int, rng):
    """n points on the shape boundary with (2D) outward normals, else None."""
    if family_dim(family) == 2:
        return _sample_on_polyline(boundary_polyline(family, params), n, rng)
    pts = _surface_points_3d(family, params, n, rng)
    return pts, None


def boundary_distance(family: str, params: dict, points: np.ndarray) -> np.ndarray:
    """Unsigned distance to the boundary: exact for circle/sphere/box/capsule,
    a tight upper bound via a dense polyline for the other 2D families."""
    p = np.asarray(points, dtype=np.float64)
    if family in ("circle", "sphere"):
        c = np.asarray(params["center"])
        return np.abs(np.linalg.norm(p - c, axis=1) - params["radius"])
    if family == "box":
        c = np.asarray(params["center"])
        h = np.asarray(params["half_extents"])
        q = np.abs(p - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return np.abs(outside + inside)
    if family == "capsule":
        a = np.asarray(params["a"])
        b = np.asarray(params["b"])
        ab = b - a
        tt = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
        closest = a + tt[:, None] * ab
        return np.abs(np.linalg.norm(p - closest, axis=1) - params["radius"])
    poly = boundary_polyline(family, params)
    seg_a = poly
    seg_b = np.roll(poly, -1, axis=0)
    seg_vec = seg_b - seg_a
    seg_len2 = np.einsum("ij,ij->i", seg_vec, seg_vec)
    # distance to each segment, min over segments (chunked over points)
    out = np.empty(len(p))
    for lo in range(0, len(p), 1024):
        chunk = p[lo:lo + 1024]
        diff = chunk[:, None, :] - seg_a[None, :, :]
        tt = np.clip(np.einsum("nki,ki->nk", diff, seg_vec) / seg_len2, 0.0, 1.0)
        closest = seg_a[None, :, :] + tt[:, :, None] * seg_vec[None, :, :]
        d = np.linalg.norm(chunk[:, None, :] - closest, axis=2)
        out[lo:lo + 1024] = d.min(axis=1)
    return out


# ---------------------------------------------------------------------------
# Shape sampling
# ---------------------------------------------------------------------------

def _cross2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def _convex_hull_ccw(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices counter-clockwise."""
    pts = points[np.lexsort((points[:, 1], points[:, 0]))]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross2(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _draw_params(family: str, rng) -> dict:
    if family == "circle":
        r = rng.uniform(0.25, 0.7)
        cmax = SHAPE_BOX - r
        return {"center": rng.uniform(-cmax, cmax, size=2).tolist(), "radius": float(r)}
    if family == "ellipse":
        a = rng.uniform(0.25, 0.6)
        b = rng.uniform(0.2, a)
        cmax = SHAPE_BOX - a
        return {
            "center": rng.uniform(-cmax, cmax, size=2).tolist(),
            "a": float(a), "b": float(b),
            "angle": float(rng.uniform(0.0, np.pi)),
        }
    if family == "polygon":
        # convex hull of random radial points, CCW
        k = int(rng.integers(5, 9))
        ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=k))
        rad = rng.uniform(0.3, 0.6, size=k)
        cmax = SHAPE_BOX - rad.max()
        c = rng.uniform(-cmax, cmax, size=2)
        pts = c + np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        verts = _convex_hull_ccw(pts)
        return {"vertices": verts.tolist()}
    if family == "fourier-blob":
        amps = rng.uniform(0.0, 0.12 / 4.0, size=4) * rng.choice([1.0, -1.0], 4)
        r0 = 0.45
        rmax = r0 + np.abs(amps).sum()
        cmax = SHAPE_BOX - rmax
        return {
            "center": rng.uniform(-cmax, cmax, size=2).tolist(),
            "r0": float(r0),
            "amps": amps.tolist(),
            "phases": rng.uniform(0.0, 2.0 * np.pi, size=4).tolist(),
        }
    if family == "sphere":
        r = rng.uniform(0.25, 0.6)
        cmax = SHAPE_BOX - r
        return {"center": rng.uniform(-cmax, cmax, size=3).tolist(), "radius": float(r)}
    if family == "box":
        h = rng.uniform(0.2, 0.5, size=3)
        cmax = SHAPE_BOX - h
        c = np.array([rng.uniform(-m, m) for m in cmax])
        return {"center": c.tolist(), "half_extents": h.tolist()}
    if family == "capsule":
        r = rng.uniform(0.15, 0.3)
        half = rng.uniform(0.15, 0.4)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        cmax = SHAPE_BOX - (half + r)
        c = rng.uniform(-cmax, cmax, size=3)
        return {
            "a": (c - half * axis).tolist(),
            "b": (c + half * axis).tolist(),
            "radius": float(r),
        }
    raise UnknownFamilyError(f"unknown shape family: {family!r}")


def _fits_domain(family: str, params: dict) -> bool:
    d = family_dim(family)
    if d == 2:
        poly = boundary_polyline(family, params)
        return bool(np.all(np.abs(poly) <= SHAPE_BOX + 1e-12))
    rng = np.random.default_rng(0)
    pts = _surface_points_3d(family, params, 512, rng)
    return bool(np.all(np.abs(pts) <= SHAPE_BOX + 1e-9))


def sample_shape(family: str, rng, shape_id: int = 0, cond_points: int = 256,
                 pool_size: int = 2048) -> ShapeSample:
    """Draw one shape, its boundary cloud, and its query pool from a stream."""
    d = family_dim(family)
    params = None
    for _ in range(100):
        cand = _draw_params(family, rng)
        if _fits_domain(family, cand):
            params = cand
            break
    if params is None:
        raise ShapeGenerationError(
            f"could not place a {family} inside the domain after 100 tries")

    cond, _ = surface_points(family, params, cond_points, rng)

    n_uniform = pool_size // 2
    n_near = pool_size - n_uniform
    uniform_pts = rng.uniform(DOMAIN_LO, DOMAIN_HI, size=(n_uniform, d))
    near_base, normals = surface_points(family, params, n_near, rng)
    offsets = rng.uniform(-NEAR_SURFACE_BAND, NEAR_SURFACE_BAND, size=n_near)
    if normals is None:
        v = rng.normal(size=(n_near, d))
        normals = v / np.linalg.norm(v, axis=1, keepdims=True)
    near_pts = np.clip(near_base + offsets[:, None] * normals, DOMAIN_LO, DOMAIN_HI)
    pts = np.vstack([uniform_pts, near_pts])
    labels = analytic_occupancy((family, params), pts)
    return ShapeSample(
        shape_id=shape_id, family=family, params=params,
        cond_points=np.ascontiguousarray(cond),
        query_pool=QueryBatch(pts, labels),
    )


def generate_dataset(manifest: DatasetManifest):
    """All samples for a manifest; sample i uses stream (seed, spawn_key=(0, i))."""
    samples = []
    mix = manifest.family_mix
    for i in range(manifest.num_shapes):
        family = mix[i % len(mix)]
        if family_dim(family) != manifest.dim:
            raise UnknownFamilyError(
                f"family {family!r} is {family_dim(family)}D but manifest dim is "
                f"{manifest.dim}")
        rng = np.random.default_rng(
            np.random.SeedSequence(manifest.seed, spawn_key=(0, i)))
        samples.append(sample_shape(
            family, rng, shape_id=i,
            cond_points=manifest.cond_points, pool_size=manifest.pool_size))
    return samples
