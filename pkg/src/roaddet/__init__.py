"""Geometry, suppression, RoIAlign and F1 evaluation for road-damage detection."""

from roaddet.boxgeom import (
    Box,
    Detection,
    GroundTruthBox,
    area,
    clip_box,
    hflip_box,
    iou,
    scale_box,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Detection",
    "GroundTruthBox",
    "area",
    "clip_box",
    "hflip_box",
    "iou",
    "scale_box",
]
