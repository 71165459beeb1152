"""Axis-aligned boxes and the coordinate transforms applied to images.

Coordinates are continuous boundary coordinates in pixels: origin at the
top-left corner, x to the right, y downward, and ``width = x_max - x_min``.
A box covering a whole 600x600 image is ``Box(0, 0, 600, 600)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"box corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def translate(self, dx: float, dy: float) -> Box:
        return Box(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)


@dataclass(frozen=True)
class Detection:
    """A predicted box with its class label and confidence."""

    box: Box
    label: str
    score: float

    def __post_init__(self):
        if not self.label:
            raise ValueError("detection label must be non-empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class GroundTruthBox:
    box: Box
    label: str

    def __post_init__(self):
        if not self.label:
            raise ValueError("ground-truth label must be non-empty")


def area(b: Box) -> float:
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes.

    Two zero-area boxes have an empty union; their IoU is defined as 0 so
    degenerate annotations never count as matches.
    """
    iw = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    ih = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = iw * ih
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(N, 4)`` float64 array of ``x_min, y_min, x_max, y_max``."""
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)


def iou_one_to_many(box: np.ndarray, others: np.ndarray) -> np.ndarray:
    """IoU of one ``(4,)`` box against an ``(N, 4)`` array.

    Uses the same operation order as :func:`iou`, so results are
    bit-identical to the scalar path.
    """
    iw = np.maximum(0.0, np.minimum(box[2], others[:, 2]) - np.maximum(box[0], others[:, 0]))
    ih = np.maximum(0.0, np.minimum(box[3], others[:, 3]) - np.maximum(box[1], others[:, 1]))
    inter = iw * ih
    box_area = (box[2] - box[0]) * (box[3] - box[1])
    other_area = (others[:, 2] - others[:, 0]) * (others[:, 3] - others[:, 1])
    union = box_area + other_area - inter
    out = np.zeros(len(others), dtype=np.float64)
    pos = union > 0.0
    out[pos] = inter[pos] / union[pos]
    return out


def scale_box(b: Box, sx: float, sy: float) -> Box:
    if sx <= 0 or sy <= 0:
        raise ValueError(f"scale factors must be positive, got sx={sx}, sy={sy}")
    return Box(b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy)


def hflip_box(b: Box, image_width: float) -> Box:
    """Mirror a box about the vertical center line of an image."""
    if b.x_min < 0 or b.x_max > image_width:
        raise ValueError(f"box {b.as_tuple()} lies outside image width {image_width}")
    return Box(image_width - b.x_max, b.y_min, image_width - b.x_min, b.y_max)


def clip_box(b: Box, width: float, height: float) -> Box:
    def clamp(v, hi):
        return min(max(v, 0.0), hi)

    return Box(
        clamp(b.x_min, width),
        clamp(b.y_min, height),
        clamp(b.x_max, width),
        clamp(b.y_max, height),
    )
