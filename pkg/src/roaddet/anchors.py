"""RPN anchor grids and the center/log-size box-delta parameterization."""

from __future__ import annotations

import math
from dataclasses import dataclass

from roaddet.boxgeom import Box

# Bound on |dw|, |dh| before exponentiation in decode_deltas.
DELTA_CLAMP = math.log(1000.0 / 16.0)


@dataclass(frozen=True)
class AnchorConfig:
    """Anchor shapes generated at every feature-map cell.

    ``scales`` are geometric-mean side lengths sqrt(w*h) in input pixels and
    ``ratios`` are aspect ratios h/w. Each cell gets one anchor per
    (scale, ratio) pair.
    """

    scales: tuple[float, ...] = (32.0, 64.0, 128.0, 256.0, 512.0)
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    stride: float = 16.0

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if not self.scales or not self.ratios:
            raise ValueError("scales and ratios must be non-empty")
        if any(s <= 0 for s in self.scales) or any(r <= 0 for r in self.ratios):
            raise ValueError("scales and ratios must be positive")
        if self.stride <= 0:
            raise ValueError("stride must be positive")

    @property
    def k(self) -> int:
        return len(self.scales) * len(self.ratios)


@dataclass(frozen=True)
class BoxDelta:
    dx: float
    dy: float
    dw: float
    dh: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dw, self.dh)):
            raise ValueError("box deltas must be finite")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.dx, self.dy, self.dw, self.dh)


def generate_anchors(cfg: AnchorConfig, feat_h: int, feat_w: int) -> list[Box]:
    """Anchors for every cell of a ``feat_h x feat_w`` feature map.

    Ordering is row-major over cells, then scale, then ratio. The anchor for
    cell (i, j) is centred at ``((j + 0.5) * stride, (i + 0.5) * stride)``.
    """
    if feat_h < 1 or feat_w < 1:
        raise ValueError("feature map dimensions must be >= 1")
    shapes = []
    for s in cfg.scales:
        for r in cfg.ratios:
            root = math.sqrt(r)
            shapes.append((s / root / 2, s * root / 2))
    anchors = []
    for i in range(feat_h):
        cy = (i + 0.5) * cfg.stride
        for j in range(feat_w):
            cx = (j + 0.5) * cfg.stride
            for hw, hh in shapes:
                anchors.append(Box(cx - hw, cy - hh, cx + hw, cy + hh))
    return anchors


def _center_size(b: Box) -> tuple[float, float, float, float]:
    w = b.x_max - b.x_min
    h = b.y_max - b.y_min
    return b.x_min + 0.5 * w, b.y_min + 0.5 * h, w, h


def encode_deltas(anchor: Box, target: Box) -> BoxDelta:
    ax, ay, aw, ah = _center_size(anchor)
    tx, ty, tw, th = _center_size(target)
    if aw <= 0 or ah <= 0:
        raise ValueError(f"anchor must have positive area: {anchor.as_tuple()}")
    if tw <= 0 or th <= 0:
        raise ValueError(f"target must have positive area: {target.as_tuple()}")
    return BoxDelta((tx - ax) / aw, (ty - ay) / ah, math.log(tw / aw), math.log(th / ah))


def decode_deltas(anchor: Box, d: BoxDelta, clamp: float = DELTA_CLAMP) -> Box:
    ax, ay, aw, ah = _center_size(anchor)
    if aw <= 0 or ah <= 0:
        raise ValueError(f"anchor must have positive area: {anchor.as_tuple()}")
    dw = min(max(d.dw, -clamp), clamp)
    dh = min(max(d.dh, -clamp), clamp)
    cx = ax + d.dx * aw
    cy = ay + d.dy * ah
    w = aw * math.exp(dw)
    h = ah * math.exp(dh)
    return Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
