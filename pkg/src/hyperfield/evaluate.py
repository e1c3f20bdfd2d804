"""Quantitative evaluation: dense occupancy grids, IoU, trajectory reports,
marching-squares contour extraction, and regime comparison tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hypernet import HypernetField, predict_weights
from .shapes import ShapeSample, analytic_occupancy
from .tasknet import FlatWeights, QueryBatch, occupancy_forward, task_loss

THRESHOLD = 0.5


@dataclass
class OccupancyGrid:
    resolution: int
    values: np.ndarray           # R^d floats in [0,1], axis order (x, y[, z])
    threshold: float = THRESHOLD

    @property
    def dim(self) -> int:
        return self.values.ndim

    def mask(self) -> np.ndarray:
        return self.values > self.threshold


def grid_points(resolution: int, dim: int) -> np.ndarray:
    """Cell-center sample points covering [-1,1]^d, shape (R^d, d)."""
    axis = -1.0 + (np.arange(resolution) + 0.5) * (2.0 / resolution)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def rasterize(weights: FlatWeights, resolution: int) -> OccupancyGrid:
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    dim = weights.spec.input_dim
    pts = grid_points(resolution, dim)
    vals = occupancy_forward(weights, pts).reshape((resolution,) * dim)
    return OccupancyGrid(resolution, vals)


def analytic_grid(sample: ShapeSample, resolution: int) -> OccupancyGrid:
    pts = grid_points(resolution, sample.dim)
    vals = analytic_occupancy(sample, pts).reshape((resolution,) * sample.dim)
    return OccupancyGrid(resolution, vals)


def iou(pred: OccupancyGrid, truth: OccupancyGrid) -> float:
    if pred.values.shape != truth.values.shape:
        raise ValueError(
            f"grid resolutions differ: {pred.values.shape} vs {truth.values.shape}")
    a = pred.mask()
    b = truth.mask()
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


@dataclass
class TrajectoryReport:
    shape_id: int
    entries: list                # [(t, iou, task_loss)] sorted by t
    fft_applied: bool = False

    def csv(self) -> str:
        lines = ["t,iou,task_loss\n"]
        for t, i, l in self.entries:
            lines.append(f"{t},{i!r},{l!r}\n")
        return "".join(lines)


def trajectory_report(field: HypernetField, sample: ShapeSample, t_list,
                      resolution: int, eval_batch: QueryBatch | None = None
                      ) -> TrajectoryReport:
    """IoU and task loss of the predicted weights at each requested timestep."""
    truth = analytic_grid(sample, resolution)
    batch = eval_batch if eval_batch is not None else sample.query_pool
    entries = []
    for t in sorted(int(t) for t in t_list):
        if not 0 <= t <= field.T:
            raise ValueError(f"t={t} outside [0, {field.T}]")
        w = predict_weights(field, sample.cond_points, t)
        entries.append((t, iou(rasterize(w, resolution), truth),
                        task_loss(w, batch)))
    return TrajectoryReport(shape_id=sample.shape_id, entries=entries)


# ---------------------------------------------------------------------------
# Marching squares
# ---------------------------------------------------------------------------

def extract_contour(grid: OccupancyGrid):
    """Marching squares at the grid threshold with linear edge interpolation.

    Returns a list of segments ((x0, y0), (x1, y1)). The ambiguous saddle
    cases (5 and 10) connect according to the cell-center average.
    """
    if grid.dim != 2:
        raise NotImplementedError(
            "contour extraction is implemented for 2D grids only")
    v = grid.values
    thr = grid.threshold
    R = grid.resolution
    axis = -1.0 + (np.arange(R) + 0.5) * (2.0 / R)

    def interp(pa, va, pb, vb):
        t = (thr - va) / (vb - va)
        return (pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]))

    segments = []
    for i in range(R - 1):
        for j in range(R - 1):
            v00 = v[i, j]
            v10 = v[i + 1, j]
            v01 = v[i, j + 1]
            v11 = v[i + 1, j + 1]
            case = ((v00 > thr) | (v10 > thr) << 1
                    | (v11 > thr) << 2 | (v01 > thr) << 3)
            if case in (0, 15):
                continue
            p00 = (axis[i], axis[j])
            p10 = (axis[i + 1], axis[j])
            p01 = (axis[i], axis[j + 1])
            p11 = (axis[i + 1], axis[j + 1])
            # edge crossings: bottom (00-10), right (10-11), top (01-11),
            # left (00-01)
            eb = interp(p00, v00, p10, v10) if (v00 > thr) != (v10 > thr) else None
            er = interp(p10, v10, p11, v11) if (v10 > thr) != (v11 > thr) else None
            et = interp(p01, v01, p11, v11) if (v01 > thr) != (v11 > thr) else None
            el = interp(p00, v00, p01, v01) if (v00 > thr) != (v01 > thr) else None
            if case in (1, 14):
                segments.append((el, eb))
            elif case in (2, 13):
                segments.append((eb, er))
            elif case in (3, 12):
                segments.append((el, er))
            elif case in (4, 11):
                segments.append((er, et))
            elif case in (6, 9):
                segments.append((eb, et))
            elif case in (7, 8):
                segments.append((el, et))
            elif case == 5:
                # corners 00 and 11 above: split by cell-center average
                if (v00 + v10 + v01 + v11) / 4.0 > thr:
                    segments.append((el, et))
                    segments.append((eb, er))
                else:
                    segments.append((el, eb))
                    segments.append((er, et))
            elif case == 10:
                if (v00 + v10 + v01 + v11) / 4.0 > thr:
                    segments.append((el, eb))
                    segments.append((er, et))
                else:
                    segments.append((el, et))
                    segments.append((eb, er))
    return segments


def contour_length(segments) -> float:
    total = 0.0
    for (a, b) in segments:
        total += float(np.hypot(b[0] - a[0], b[1] - a[1]))
    return total


# ---------------------------------------------------------------------------
# Regime comparison
# ---------------------------------------------------------------------------

@dataclass
class RegimeRow:
    regime: str
    fft: bool
    mean_iou: float
    min_iou: float
    per_shape: list


def compare_regimes(dataset, fields: dict, resolution: int, fft_steps: int,
                    eta: float, seed: int, fft_batch: int = 256):
    """Per-regime mean/min IoU at t=T, with and without fast fine-tuning.

    `fields` maps regime name -> trained HypernetField (same spec/theta0
    convention). Returns a list of RegimeRow; FFT rows are appended when
    fft_steps > 0."""
    from .trainer import STREAM_EVAL, derive_rng, fast_finetune

    rows = []
    for name, fld in fields.items():
        plain = []
        tuned = []
        for i, sample in enumerate(dataset):
            truth = analytic_grid(sample, resolution)
            w = predict_weights(fld, sample.cond_points, fld.T)
            plain.append(iou(rasterize(w, resolution), truth))
            if fft_steps > 0:
                rng = derive_rng(seed, STREAM_EVAL, i)
                w_fft = fast_finetune(w, sample, fft_steps, eta, rng,
                                      batch_size=fft_batch)
                tuned.append(iou(rasterize(w_fft, resolution), truth))
        rows.append(RegimeRow(name, False, float(np.mean(plain)),
                              float(np.min(plain)), plain))
        if fft_steps > 0:
            rows.append(RegimeRow(name, True, float(np.mean(tuned)),
                                  float(np.min(tuned)), tuned))
    return rows


def regime_table_csv(rows) -> str:
    lines = ["regime,fft,mean_iou,min_iou\n"]
    for r in rows:
        lines.append(f"{r.regime},{int(r.fft)},{r.mean_iou!r},{r.min_iou!r}\n")
    return "".join(lines)


# ---------------------------------------------------------------------------
# SVG emission
# ---------------------------------------------------------------------------

def contour_svg(segments, size: int = 512) -> str:
    """Line segments in [-1,1]^2 rendered as a standalone SVG document."""
    def sx(x):
        return (x + 1.0) * 0.5 * size

    def sy(y):
        return (1.0 - (y + 1.0) * 0.5) * size

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
        f'height="{size}" viewBox="0 0 {size} {size}">\n',
        f'<rect width="{size}" height="{size}" fill="white"/>\n',
    ]
    for (a, b) in segments:
        parts.append(
            f'<line x1="{sx(a[0]):.3f}" y1="{sy(a[1]):.3f}" '
            f'x2="{sx(b[0]):.3f}" y2="{sy(b[1]):.3f}" '
            f'stroke="black" stroke-width="1"/>\n')
    parts.append("</svg>\n")
    return "".join(parts)


def curve_svg(xs, ys, size: int = 512, margin: int = 40,
              x_label: str = "t", y_label: str = "iou") -> str:
    """A single polyline plot (trajectory IoU curve)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = 0.0, 1.0
    span = size - 2 * margin

    def px(x):
        return margin + (x - x0) / max(x1 - x0, 1e-12) * span

    def py(y):
        return size - margin - (y - y0) / (y1 - y0) * span

    pts = " ".join(f"{px(x):.3f},{py(y):.3f}" for x, y in zip(xs, ys))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
        f'height="{size}" viewBox="0 0 {size} {size}">\n'
        f'<rect width="{size}" height="{size}" fill="white"/>\n'
        f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" '
        f'fill="none" stroke="gray"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="black" '
        f'stroke-width="2"/>\n'
        f'<text x="{size // 2}" y="{size - 8}" text-anchor="middle">'
        f'{x_label}</text>\n'
        f'<text x="12" y="{size // 2}" text-anchor="middle" '
        f'transform="rotate(-90 12 {size // 2})">{y_label}</text>\n'
        "</svg>\n"
    )
