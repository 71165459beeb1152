"""Write a synthetic VOC dataset plus a matching detection CSV.

Defaults reproduce the published dataset size (9,053 images, 15,435 boxes,
8 classes, 600x600), so ``roaddet validate`` on the output should pass.

    python scripts/make_synthetic_dataset.py out/ --jitter 0.02
"""

import argparse
from pathlib import Path

import numpy as np

from roaddet.boxgeom import Detection
from roaddet.ingest import format_detections, to_voc_xml
from roaddet.synthetic import dataset_with_counts, jitter_box


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--images", type=int, default=9053)
    ap.add_argument("--boxes", type=int, default=15435)
    ap.add_argument("--jitter", type=float, default=0.02, help="prediction edge jitter as a fraction of box size")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    gt_dir = args.out / "annotations"
    gt_dir.mkdir(parents=True, exist_ok=True)
    dets = {}
    for image_id, boxes in dataset_with_counts(rng, args.images, args.boxes).items():
        (gt_dir / f"{image_id}.xml").write_text(to_voc_xml(image_id, 600, 600, boxes))
        dets[image_id] = [
            Detection(jitter_box(rng, g.box, args.jitter), g.label, float(rng.uniform(0.3, 1.0))) for g in boxes
        ]
    (args.out / "detections.csv").write_text(format_detections(dets))
    print(f"wrote {args.images} annotations to {gt_dir} and {args.out / 'detections.csv'}")


if __name__ == "__main__":
    main()
