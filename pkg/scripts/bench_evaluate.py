"""Time matching and F1 aggregation on synthetic images, in memory and via the CLI."""

import argparse
import tempfile
import time
from pathlib import Path

import numpy as np

from roaddet.cli import main as cli_main
from roaddet.evaluate import evaluate_dataset
from roaddet.ingest import format_detections, to_voc_xml
from roaddet.synthetic import synthetic_samples


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--images", type=int, default=10_000)
    ap.add_argument("--mean-boxes", type=float, default=2.0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = synthetic_samples(np.random.default_rng(args.seed), args.images, args.mean_boxes, jitter=0.1)
    t0 = time.perf_counter()
    report = evaluate_dataset(samples, workers=args.workers)
    t_mem = time.perf_counter() - t0
    print(f"in-memory: {args.images} images in {t_mem:.3f}s, pooled F1 {report.pooled_f1:.4f}, macro F1 {report.macro_f1:.4f}")

    with tempfile.TemporaryDirectory() as d:
        gt_dir = Path(d) / "gt"
        gt_dir.mkdir()
        for s in samples:
            (gt_dir / f"{s.image_id}.xml").write_text(to_voc_xml(s.image_id, 600, 600, s.ground_truth))
        det = Path(d) / "dets.csv"
        det.write_text(format_detections({s.image_id: s.predictions for s in samples}))
        t0 = time.perf_counter()
        cli_main(["evaluate", "--gt", str(gt_dir), "--detections", str(det), "--workers", str(args.workers), "--out", str(Path(d) / "r.txt")])
        print(f"cli evaluate (parse + match): {time.perf_counter() - t0:.3f}s")


if __name__ == "__main__":
    main()
