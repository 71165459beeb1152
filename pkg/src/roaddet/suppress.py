"""Score-ordered NMS, top-N selection, and same-class larger-area suppression.

Both suppression rules compare IoU with a strict ``>``: a pair whose IoU is
exactly the threshold is left alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from roaddet.boxgeom import Detection, boxes_to_array, iou_one_to_many

RPN_NMS_IOU = 0.7
RPN_TOP_N = 2000
POSTPROCESS_IOU = 0.85


@dataclass(frozen=True)
class SuppressionConfig:
    nms_iou_threshold: float = RPN_NMS_IOU
    top_n: Optional[int] = RPN_TOP_N
    postprocess_iou_threshold: float = POSTPROCESS_IOU

    def __post_init__(self):
        for name in ("nms_iou_threshold", "postprocess_iou_threshold"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.top_n is not None and self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")


def score_order(dets: Sequence[Detection]) -> list[int]:
    """Indices sorted by score descending, ties broken by lower index."""
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))


def _greedy(boxes: np.ndarray, order: list[int], threshold: float, groups=None) -> list[int]:
    # Each kept box suppresses every still-alive later box (same group, if
    # groups are given) whose IoU with it exceeds the threshold.
    order = np.asarray(order, dtype=np.intp)
    alive = np.ones(len(order), dtype=bool)
    ranked = boxes[order]
    ranked_groups = None if groups is None else groups[order]
    keep = []
    for pos in range(len(order)):
        if not alive[pos]:
            continue
        keep.append(int(order[pos]))
        rest = np.flatnonzero(alive[pos + 1:]) + pos + 1
        if ranked_groups is not None:
            rest = rest[ranked_groups[rest] == ranked_groups[pos]]
        if rest.size == 0:
            continue
        overlaps = iou_one_to_many(ranked[pos], ranked[rest])
        alive[rest[overlaps > threshold]] = False
    return keep


def nms(dets: Sequence[Detection], iou_threshold: float = RPN_NMS_IOU) -> list[int]:
    """Greedy non-maximum suppression ignoring class labels.

    Returns kept indices in keep order (score descending).
    """
    if not dets:
        return []
    return _greedy(boxes_to_array(d.box for d in dets), score_order(dets), iou_threshold)


def top_n(dets: Sequence[Detection], n: int) -> list[Detection]:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return [dets[i] for i in score_order(dets)[:n]]


def top_n_indices(dets: Sequence[Detection], n: int) -> list[int]:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return score_order(dets)[:n]


def postprocess_indices(dets: Sequence[Detection], iou_threshold: float = POSTPROCESS_IOU) -> list[int]:
    """Indices surviving same-class duplicate removal, in input order.

    Detections are visited largest area first (ties: higher score, then
    lower index). A visited survivor removes every later same-class
    detection overlapping it by more than ``iou_threshold``.
    """
    if not dets:
        return []
    boxes = boxes_to_array(d.box for d in dets)
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    order = sorted(range(len(dets)), key=lambda i: (-areas[i], -dets[i].score, i))
    _, groups = np.unique([d.label for d in dets], return_inverse=True)
    return sorted(_greedy(boxes, order, iou_threshold, groups=groups))


def postprocess(dets: Sequence[Detection], iou_threshold: float = POSTPROCESS_IOU) -> list[Detection]:
    """Drop same-class duplicates above ``iou_threshold``, keeping the larger box."""
    return [dets[i] for i in postprocess_indices(dets, iou_threshold)]


def propose(dets: Sequence[Detection], cfg: SuppressionConfig = SuppressionConfig()) -> list[int]:
    """RPN-style proposal filtering: NMS, then keep the ``top_n`` best survivors."""
    keep = nms(dets, cfg.nms_iou_threshold)
    if cfg.top_n is not None:
        keep = keep[: cfg.top_n]
    return keep
