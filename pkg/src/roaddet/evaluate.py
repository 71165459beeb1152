"""Class-matched F1 evaluation at an IoU threshold.

A prediction matches a ground-truth box when the labels agree and their IoU
is over the threshold (strictly, unless ``inclusive=True``). Within an
image, predictions are visited by score (descending, ties by lower index);
each one claims the unclaimed same-class ground truth it overlaps most.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

from roaddet.boxgeom import Detection, GroundTruthBox, iou

MATCH_IOU = 0.5


@dataclass(frozen=True)
class ImageSample:
    image_id: str
    ground_truth: tuple[GroundTruthBox, ...] = ()
    predictions: tuple[Detection, ...] = ()

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        object.__setattr__(self, "predictions", tuple(self.predictions))


@dataclass(frozen=True)
class MatchOutcome:
    pairs: dict[int, int]
    tp: int
    fp: int
    fn: int


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: Counts):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        # nothing predicted and nothing to find counts as perfect
        if self.tp == self.fp == self.fn == 0:
            return 1.0
        return f1_score(self.precision, self.recall)

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass
class EvalReport:
    pooled: Counts
    macro_f1: float
    per_class: dict[str, Counts]
    image_count: int
    iou_threshold: float = MATCH_IOU
    inclusive: bool = False
    per_image_f1: dict[str, float] = field(default_factory=dict, repr=False)

    @property
    def pooled_f1(self) -> float:
        return self.pooled.f1

    def as_dict(self) -> dict:
        return {
            "image_count": self.image_count,
            "iou_threshold": self.iou_threshold,
            "inclusive": self.inclusive,
            "pooled": self.pooled.as_dict(),
            "mean_f1": {"pooled": self.pooled.f1, "macro": self.macro_f1},
            "per_class": {k: self.per_class[k].as_dict() for k in sorted(self.per_class)},
        }


def f1_score(p: float, r: float) -> float:
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise ValueError(f"precision and recall must lie in [0, 1], got p={p}, r={r}")
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def match_image(s: ImageSample, iou_threshold: float = MATCH_IOU, inclusive: bool = False) -> MatchOutcome:
    preds = s.predictions
    gts = s.ground_truth
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    claimed = [False] * len(gts)
    pairs = {}
    for pi in order:
        pred = preds[pi]
        best, best_iou = -1, -1.0
        for gi, gt in enumerate(gts):
            if claimed[gi] or gt.label != pred.label:
                continue
            v = iou(pred.box, gt.box)
            if v > best_iou:
                best, best_iou = gi, v
        if best < 0:
            continue
        if best_iou > iou_threshold or (inclusive and best_iou == iou_threshold):
            claimed[best] = True
            pairs[pi] = best
    tp = len(pairs)
    return MatchOutcome(pairs=pairs, tp=tp, fp=len(preds) - tp, fn=len(gts) - tp)


def _image_counts(s: ImageSample, iou_threshold: float, inclusive: bool):
    m = match_image(s, iou_threshold, inclusive)
    per_class: dict[str, Counts] = {}
    for pi, pred in enumerate(s.predictions):
        c = per_class.setdefault(pred.label, Counts())
        if pi in m.pairs:
            c.tp += 1
        else:
            c.fp += 1
    matched_gt = set(m.pairs.values())
    for gi, gt in enumerate(s.ground_truth):
        if gi not in matched_gt:
            per_class.setdefault(gt.label, Counts()).fn += 1
    return Counts(m.tp, m.fp, m.fn), per_class


def evaluate_dataset(
    samples: Sequence[ImageSample],
    iou_threshold: float = MATCH_IOU,
    inclusive: bool = False,
    workers: int = 1,
) -> EvalReport:
    """Match every image and aggregate counts.

    The pooled F1 comes from counts summed over all images; the macro F1
    is the mean of per-image F1 scores. Per-class rows use class-restricted
    counts. Results do not depend on ``workers``.
    """
    dupes = [k for k, n in Counter(s.image_id for s in samples).items() if n > 1]
    if dupes:
        raise ValueError(f"duplicate image_id(s): {sorted(dupes)[:5]}")
    fn = partial(_image_counts, iou_threshold=iou_threshold, inclusive=inclusive)
    if workers > 1 and len(samples) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, samples, chunksize=max(1, len(samples) // (4 * workers))))
    else:
        results = [fn(s) for s in samples]

    pooled = Counts()
    per_class: dict[str, Counts] = {}
    per_image = {}
    for s, (counts, classes) in zip(samples, results):
        pooled.add(counts)
        per_image[s.image_id] = counts.f1
        for label, c in classes.items():
            per_class.setdefault(label, Counts()).add(c)
    macro = sum(per_image.values()) / len(per_image) if per_image else 1.0
    return EvalReport(
        pooled=pooled,
        macro_f1=macro,
        per_class=per_class,
        image_count=len(samples),
        iou_threshold=iou_threshold,
        inclusive=inclusive,
        per_image_f1=per_image,
    )
