"""Random datasets and detections for oracle checks and benchmarks."""

from __future__ import annotations

import numpy as np

from roaddet.boxgeom import Box, Detection, GroundTruthBox, iou
from roaddet.evaluate import ImageSample

CLASSES = ("D00", "D01", "D10", "D11", "D20", "D40", "D43", "D44")


def random_box(rng: np.random.Generator, width=600.0, height=600.0, min_side=20.0, max_side=200.0) -> Box:
    w = rng.uniform(min_side, max_side)
    h = rng.uniform(min_side, max_side)
    x = rng.uniform(0, width - w)
    y = rng.uniform(0, height - h)
    return Box(x, y, x + w, y + h)


def random_ground_truth(rng, n, classes=CLASSES, width=600.0, height=600.0) -> list[GroundTruthBox]:
    return [GroundTruthBox(random_box(rng, width, height), str(rng.choice(classes))) for _ in range(n)]


def jitter_box(rng, b: Box, fraction: float) -> Box:
    """Move each edge by at most ``fraction`` of the box's side along that axis."""
    dx = b.width * fraction
    dy = b.height * fraction
    return Box(
        b.x_min + rng.uniform(-dx, dx),
        b.y_min + rng.uniform(-dy, dy),
        b.x_max + rng.uniform(-dx, dx),
        b.y_max + rng.uniform(-dy, dy),
    )


def shifted_off(b: Box, others=()) -> Box:
    """A copy of ``b`` overlapping it with IoU 0.2 and no box in ``others`` above 0.5.

    Tries shifts of two thirds of a side right, left, down and up; if all of
    them land on a neighbour, the copy is moved clear of the image.
    """
    for dx, dy in ((2 / 3, 0), (-2 / 3, 0), (0, 2 / 3), (0, -2 / 3)):
        cand = b.translate(b.width * dx, b.height * dy)
        if all(iou(cand, o) <= 0.5 for o in others):
            return cand
    return b.translate(-10 * b.x_max - 10 * b.width, 0.0)


def synthetic_samples(rng, n_images, mean_boxes=2.0, mode="jitter", jitter=0.02) -> list[ImageSample]:
    """Images whose predictions are copies of their ground truth.

    ``mode="jitter"`` perturbs each copy by up to ``jitter`` of the box size;
    ``mode="miss"`` shifts each copy so its IoU with the original is 0.2.
    """
    samples = []
    for k in range(n_images):
        gts = random_ground_truth(rng, int(rng.poisson(mean_boxes)))
        preds = []
        for gt in gts:
            if mode == "jitter":
                box = jitter_box(rng, gt.box, jitter)
            else:
                box = shifted_off(gt.box, [g.box for g in gts if g.label == gt.label])
            preds.append(Detection(box, gt.label, float(rng.uniform(0.05, 1.0))))
        samples.append(ImageSample(f"img_{k:06d}", tuple(gts), tuple(preds)))
    return samples


def dataset_with_counts(rng, n_images, n_boxes, classes=CLASSES, width=600, height=600):
    """Per-image integer-coordinate annotations totalling exactly ``n_boxes``.

    Every class appears at least once when ``n_boxes >= len(classes)``.
    Returns ``{image_id: [GroundTruthBox, ...]}``.
    """
    per_image = np.full(n_images, n_boxes // n_images)
    per_image[: n_boxes % n_images] += 1
    rng.shuffle(per_image)
    labels = list(classes[:n_boxes]) + [str(c) for c in rng.choice(classes, max(0, n_boxes - len(classes)))]
    out = {}
    i = 0
    for k, m in enumerate(per_image):
        boxes = []
        for _ in range(m):
            x1, y1 = (int(v) for v in rng.integers(0, width - 20, 2))
            x2 = int(rng.integers(x1 + 1, width + 1))
            y2 = int(rng.integers(y1 + 1, height + 1))
            boxes.append(GroundTruthBox(Box(x1, y1, x2, y2), labels[i]))
            i += 1
        out[f"{k:06d}"] = boxes
    return out
