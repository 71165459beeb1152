"""Quantization-free RoI pooling by bilinear sampling.

Feature values sit at integer coordinates: ``values[c, y, x]`` is the value
at continuous point ``(x, y)``. Outside the grid the map is treated as zero,
so a sample point near a border blends the edge value with zeros and a
point with no in-grid neighbour contributes 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from roaddet.boxgeom import Box


@dataclass(frozen=True, eq=False)
class FeatureMap:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"feature map must be C x H x W with all dims >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature map values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class RoiAlignParams:
    out_h: int = 7
    out_w: int = 7
    samples_per_axis: int = 2
    pool_mode: str = "average"
    spatial_scale: float = 1.0

    def __post_init__(self):
        if self.out_h < 1 or self.out_w < 1:
            raise ValueError("output size must be >= 1 per axis")
        if self.samples_per_axis < 1:
            raise ValueError("samples_per_axis must be >= 1")
        if self.pool_mode not in ("average", "max"):
            raise ValueError(f"pool_mode must be 'average' or 'max', got {self.pool_mode!r}")
        if not self.spatial_scale > 0:
            raise ValueError("spatial_scale must be positive")


def bilinear_sample(fm: FeatureMap, channel: int, x: float, y: float) -> float:
    if not 0 <= channel < fm.channels:
        raise IndexError(f"channel {channel} out of range for {fm.channels} channels")
    grid = fm.values[channel]

    def at(yy, xx):
        if 0 <= yy < fm.height and 0 <= xx < fm.width:
            return float(grid[yy, xx])
        return 0.0

    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    # lerp form keeps constant regions exact
    top = at(y0, x0) + fx * (at(y0, x0 + 1) - at(y0, x0))
    bottom = at(y0 + 1, x0) + fx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0))
    return top + fy * (bottom - top)


def _bilinear_many(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Zero-padded bilinear sampling of a ``C x H x W`` grid at paired points."""
    _, h, w = grid.shape
    padded = np.pad(grid, ((0, 0), (1, 1), (1, 1)))
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0

    def index(base, offset, size):
        # indices into the padded grid; anything off the grid lands on the zero border
        i = base.astype(np.intp) + 1 + offset
        return np.where((i >= 0) & (i <= size + 1), i, 0)

    xa, xb = index(x0, 0, w), index(x0, 1, w)
    ya, yb = index(y0, 0, h), index(y0, 1, h)
    top = padded[:, ya, xa] + fx * (padded[:, ya, xb] - padded[:, ya, xa])
    bottom = padded[:, yb, xa] + fx * (padded[:, yb, xb] - padded[:, yb, xa])
    return top + fy * (bottom - top)


def sample_points(roi: Box, p: RoiAlignParams) -> tuple[np.ndarray, np.ndarray]:
    """Feature-map coordinates of every sample point.

    Returns ``(xs, ys)`` with shapes ``(out_w, s)`` and ``(out_h, s)``: the
    s sample offsets along each axis for every bin column/row.
    """
    s = p.samples_per_axis
    x1 = roi.x_min * p.spatial_scale
    y1 = roi.y_min * p.spatial_scale
    bin_w = (roi.x_max * p.spatial_scale - x1) / p.out_w
    bin_h = (roi.y_max * p.spatial_scale - y1) / p.out_h
    frac = (np.arange(s) + 0.5) / s
    xs = x1 + (np.arange(p.out_w)[:, None] + frac[None, :]) * bin_w
    ys = y1 + (np.arange(p.out_h)[:, None] + frac[None, :]) * bin_h
    return xs, ys


def roi_align(fm: FeatureMap, roi: Box, p: RoiAlignParams = RoiAlignParams()) -> FeatureMap:
    """Pool ``roi`` into a ``channels x out_h x out_w`` feature map.

    Every bin gets ``samples_per_axis ** 2`` points at regular sub-bin
    centres; each is bilinearly sampled and the bin takes their mean or max.
    """
    if not (roi.x_max - roi.x_min) * p.spatial_scale > 0 or not (roi.y_max - roi.y_min) * p.spatial_scale > 0:
        raise ValueError(f"RoI {roi.as_tuple()} has no area after scaling")
    s = p.samples_per_axis
    xs, ys = sample_points(roi, p)
    # grid of points ordered (bin_row, sub_y, bin_col, sub_x)
    gy = np.broadcast_to(ys[:, :, None, None], (p.out_h, s, p.out_w, s))
    gx = np.broadcast_to(xs[None, None, :, :], (p.out_h, s, p.out_w, s))
    vals = _bilinear_many(fm.values, gx.ravel(), gy.ravel())
    vals = vals.reshape(fm.channels, p.out_h, s, p.out_w, s)
    if p.pool_mode == "average":
        # axis-by-axis means keep the 2x2 case exact on constant input
        pooled = vals.mean(axis=4).mean(axis=2)
    else:
        pooled = vals.max(axis=(2, 4))
    return FeatureMap(pooled)
