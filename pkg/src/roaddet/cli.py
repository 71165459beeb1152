"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 internal
invariant violation. Output files are written to a temporary sibling and
renamed into place, so a failed run never leaves a partial file.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np

from roaddet import anchors, ingest, render, roialign, suppress
from roaddet.boxgeom import Box, Detection, clip_box, hflip_box, iou
from roaddet.evaluate import MATCH_IOU, ImageSample, evaluate_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INVARIANT = 3


class InvariantError(RuntimeError):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threshold(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must lie in (0, 1], got {text}")
    return v


def _unit(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"value must lie in [0, 1], got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        vals = [_positive(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("list must be non-empty")
    return vals


# -- helpers -----------------------------------------------------------------


def _require(*paths):
    for p in paths:
        if p is not None and not Path(p).exists():
            raise InputError(f"input not found: {p}")


def _check_out(path):
    if path is not None and not Path(path).resolve().parent.is_dir():
        raise InputError(f"output directory does not exist: {Path(path).parent}")


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        ingest.atomic_write(out, text)


def _score_filter(dets: dict, min_score: float) -> dict:
    if min_score <= 0:
        return dets
    return {k: [d for d in v if d.score >= min_score] for k, v in dets.items()}


def _per_image(fn, dets: dict, workers: int) -> dict:
    keys = list(dets)
    if workers > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, [dets[k] for k in keys]))
    else:
        results = [fn(dets[k]) for k in keys]
    return dict(zip(keys, results))


def _fmt_num(v: float) -> str:
    return repr(float(v))


# -- subcommands -------------------------------------------------------------


def cmd_evaluate(args) -> int:
    _require(args.gt, args.detections)
    _check_out(args.out)
    manifest = ingest.load_ground_truth(args.gt)
    dets = _score_filter(ingest.load_detections(args.detections), args.score_threshold)
    unknown = sorted(set(dets) - set(manifest.images))
    if unknown:
        print(f"warning: {len(unknown)} image(s) with detections but no ground truth, "
              f"e.g. {unknown[0]}; their detections count as false positives", file=sys.stderr)
    ids = list(manifest.images) + unknown
    samples = [
        ImageSample(
            image_id,
            tuple(manifest.images[image_id].annotations) if image_id in manifest.images else (),
            tuple(dets.get(image_id, ())),
        )
        for image_id in ids
    ]
    report = evaluate_dataset(samples, args.iou, inclusive=args.inclusive, workers=args.workers)
    n_pred = sum(len(s.predictions) for s in samples)
    n_gt = sum(len(s.ground_truth) for s in samples)
    p = report.pooled
    if p.tp + p.fp != n_pred or p.tp + p.fn != n_gt:
        raise InvariantError(f"count identities violated: tp={p.tp} fp={p.fp} fn={p.fn}, {n_pred} predictions, {n_gt} ground truth")

    headline = report.pooled_f1 if args.headline == "pooled" else report.macro_f1
    if args.format == "json":
        data = report.as_dict()
        data["headline"] = {"aggregation": args.headline, "f1": headline}
        text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    else:
        op = ">=" if args.inclusive else ">"
        lines = [
            f"images: {report.image_count}",
            f"match rule: same label and IoU {op} {args.iou:g}",
            f"tp: {p.tp}  fp: {p.fp}  fn: {p.fn}",
            f"precision: {p.precision:.6f}",
            f"recall: {p.recall:.6f}",
            f"mean F1 (pooled): {report.pooled_f1:.6f}",
            f"mean F1 (macro): {report.macro_f1:.6f}",
            f"headline ({args.headline}): {headline:.6f}",
            "",
            f"{'class':<12}{'tp':>8}{'fp':>8}{'fn':>8}{'precision':>12}{'recall':>10}{'f1':>10}",
        ]
        for label in sorted(report.per_class):
            c = report.per_class[label]
            lines.append(f"{label:<12}{c.tp:>8}{c.fp:>8}{c.fn:>8}{c.precision:>12.6f}{c.recall:>10.6f}{c.f1:>10.6f}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_postprocess(args) -> int:
    _require(args.detections)
    _check_out(args.out)
    dets = _score_filter(ingest.load_detections(args.detections), args.score_threshold)
    kept = _per_image(partial(suppress.postprocess, iou_threshold=args.threshold), dets, args.workers)
    for image_id, rows in kept.items():
        for a_i, a in enumerate(rows):
            for b in rows[a_i + 1:]:
                if a.label == b.label and iou(a.box, b.box) > args.threshold:
                    raise InvariantError(f"{image_id}: same-class pair above threshold survived")
    if args.submission:
        text = ingest.format_submission(kept)
    else:
        text = ingest.format_detections(kept)
    _emit(text, args.out)
    return EXIT_OK


def _propose(rows, cfg):
    return [rows[i] for i in suppress.propose(rows, cfg)]


def cmd_nms(args) -> int:
    _require(args.detections)
    _check_out(args.out)
    dets = _score_filter(ingest.load_detections(args.detections), args.score_threshold)
    cfg = suppress.SuppressionConfig(nms_iou_threshold=args.threshold, top_n=args.top_n)
    kept = _per_image(partial(_propose, cfg=cfg), dets, args.workers)
    _emit(ingest.format_detections(kept), args.out)
    return EXIT_OK


def cmd_anchors(args) -> int:
    _check_out(args.out)
    cfg = anchors.AnchorConfig(scales=tuple(args.scales), ratios=tuple(args.ratios), stride=args.stride)
    boxes = anchors.generate_anchors(cfg, args.feat_h, args.feat_w)
    if args.format == "json":
        text = json.dumps(
            {
                "scales": list(cfg.scales),
                "ratios": list(cfg.ratios),
                "stride": cfg.stride,
                "feat_h": args.feat_h,
                "feat_w": args.feat_w,
                "k": cfg.k,
                "anchors": [list(b.as_tuple()) for b in boxes],
            },
            indent=2,
        ) + "\n"
    else:
        lines = ["xmin,ymin,xmax,ymax"]
        lines += [",".join(_fmt_num(v) for v in b.as_tuple()) for b in boxes]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def load_feature_map(path) -> roialign.FeatureMap:
    """Read a ``.npy`` array (H x W or C x H x W) or a CSV grid.

    CSV grids hold one row of comma-separated values per line; channels are
    separated by blank lines.
    """
    path = Path(path)
    if path.suffix == ".npy":
        return roialign.FeatureMap(np.load(path, allow_pickle=False))
    channels = []
    current = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            if current:
                channels.append(current)
                current = []
            continue
        try:
            current.append([float(v) for v in line.split(",")])
        except ValueError:
            raise InputError(f"{path}: line {line_no}: not a comma-separated row of numbers") from None
    if current:
        channels.append(current)
    if not channels:
        raise InputError(f"{path}: empty feature map")
    shapes = {(len(c), len(r)) for c in channels for r in c}
    widths = {len(r) for c in channels for r in c}
    heights = {len(c) for c in channels}
    if len(widths) != 1 or len(heights) != 1:
        raise InputError(f"{path}: ragged feature map grid, row/channel shapes {sorted(shapes)}")
    return roialign.FeatureMap(np.array(channels))


def format_feature_map(fm: roialign.FeatureMap) -> str:
    blocks = []
    for ch in fm.values:
        blocks.append("\n".join(",".join(_fmt_num(v) for v in row) for row in ch))
    return "\n\n".join(blocks) + "\n"


def cmd_roialign(args) -> int:
    _require(args.map)
    _check_out(args.out)
    fm = load_feature_map(args.map)
    params = roialign.RoiAlignParams(
        out_h=args.out_size[0],
        out_w=args.out_size[1],
        samples_per_axis=args.samples,
        pool_mode=args.mode,
        spatial_scale=args.spatial_scale,
    )
    out = roialign.roi_align(fm, Box(*args.roi), params)
    if args.format == "json":
        text = json.dumps({"shape": list(out.values.shape), "values": out.values.tolist()}) + "\n"
    else:
        text = format_feature_map(out)
    _emit(text, args.out)
    return EXIT_OK


def cmd_transform(args) -> int:
    _require(args.detections, args.gt)
    _check_out(args.out)
    dets = ingest.load_detections(args.detections)
    sizes = {}
    if args.gt is not None:
        manifest = ingest.load_ground_truth(args.gt)
        sizes = {k: (e.width, e.height) for k, e in manifest.images.items() if e.width is not None}
    default = tuple(args.orig_size) if args.orig_size else (600.0, 600.0)
    side = ingest.MODEL_SIDE
    out = {}
    for image_id, rows in dets.items():
        w, h = sizes.get(image_id, default)
        if args.direction == "to-model":
            fwd = partial(ingest.to_model_space, orig_w=w, orig_h=h)
            out_w, out_h = side, side
        else:
            fwd = partial(ingest.to_image_space, orig_w=w, orig_h=h)
            out_w, out_h = w, h
        moved = []
        for d in rows:
            box = fwd(d.box)
            if args.clip:
                box = clip_box(box, out_w, out_h)
            if args.hflip:
                box = hflip_box(box, out_w)
            moved.append(Detection(box, d.label, d.score))
        out[image_id] = moved
    _emit(ingest.format_detections(out), args.out)
    return EXIT_OK


def cmd_render(args) -> int:
    _require(args.gt, args.detections)
    _check_out(args.out)
    manifest = ingest.load_ground_truth(args.gt)
    if args.image_id not in manifest.images:
        raise InputError(f"image id {args.image_id!r} not found in ground truth {args.gt}")
    entry = manifest.images[args.image_id]
    preds = []
    if args.detections is not None:
        preds = _score_filter(ingest.load_detections(args.detections), args.score_threshold).get(args.image_id, [])
    width, height = entry.width, entry.height
    if width is None:
        boxes = [g.box for g in entry.annotations] + [d.box for d in preds]
        width = max([b.x_max for b in boxes], default=1.0)
        height = max([b.y_max for b in boxes], default=1.0)
    href = args.image_path if args.image_path is not None else f"{args.image_id}.jpg"
    svg = render.render_svg(width, height, entry.annotations, preds, image_href=href)
    _emit(svg, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    _require(args.gt)
    _check_out(args.out)
    manifest = ingest.load_ground_truth(args.gt)
    exp = ingest.DatasetExpectations(
        images=args.expect_images,
        boxes=args.expect_boxes,
        classes=args.expect_classes,
        width=args.expect_size[0],
        height=args.expect_size[1],
    )
    report = ingest.validate_dataset(manifest, exp)
    labels = report.observed["label_counts"]
    if sum(labels.values()) != report.observed["boxes"]:
        raise InvariantError("label registry counts do not sum to the box count")
    warnings = manifest.warnings
    if args.format == "json":
        data = report.as_dict()
        data["warnings"] = warnings
        text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    else:
        obs = report.observed
        lines = [
            f"images: {obs['images']} (expected {exp.images})",
            f"boxes: {obs['boxes']} (expected {exp.boxes})",
            f"classes: {obs['classes']} (expected {exp.classes})",
            "label counts: " + ", ".join(f"{k}={v}" for k, v in labels.items()),
            f"status: {'PASS' if report.passed else 'MISMATCH'} ({len(report.findings)} finding(s))",
        ]
        lines += [f"finding: {f}" for f in report.findings]
        lines += [f"warning: {w}" for w in warnings]
        lines += [f"note: {n}" for n in report.notes]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roaddet", description="Road-damage detection geometry, suppression and evaluation tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, fmt=("text", "json")):
        p.add_argument("--out", help="output file (default: stdout)")
        if fmt:
            p.add_argument("--format", choices=fmt, default=fmt[0])

    def workers(p):
        p.add_argument("--workers", type=_positive_int, default=1, help="per-image worker processes")

    p = sub.add_parser("evaluate", help="F1 of detections against ground truth")
    p.add_argument("--gt", required=True, help="VOC XML directory or ground-truth CSV")
    p.add_argument("--detections", required=True, help="detection CSV")
    p.add_argument("--iou", type=_threshold, default=MATCH_IOU, help="match IoU threshold (default 0.5)")
    p.add_argument("--inclusive", action="store_true", help="match at IoU >= threshold instead of >")
    p.add_argument("--score-threshold", type=_unit, default=0.0, help="drop detections scoring below this first")
    p.add_argument("--headline", choices=("pooled", "macro"), default="pooled", help="aggregation reported as headline")
    common(p)
    workers(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("postprocess", help="drop same-class duplicates, keeping the larger box")
    p.add_argument("--detections", required=True)
    p.add_argument("--threshold", type=_threshold, default=suppress.POSTPROCESS_IOU, help="IoU above which duplicates are removed (default 0.85)")
    p.add_argument("--score-threshold", type=_unit, default=0.0, help="applied before post-processing")
    p.add_argument("--submission", action="store_true", help="write best-effort challenge submission lines instead of CSV")
    common(p, fmt=None)
    workers(p)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("nms", help="class-agnostic greedy NMS per image, then top-N")
    p.add_argument("--detections", required=True)
    p.add_argument("--threshold", type=_threshold, default=suppress.RPN_NMS_IOU, help="NMS IoU threshold (default 0.7)")
    p.add_argument("--top-n", type=_positive_int, default=suppress.RPN_TOP_N, help="boxes kept per image after NMS (default 2000)")
    p.add_argument("--score-threshold", type=_unit, default=0.0)
    common(p, fmt=None)
    workers(p)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("anchors", help="print the anchor grid")
    p.add_argument("--scales", type=_float_list, default=[32, 64, 128, 256, 512], help="comma-separated anchor sides")
    p.add_argument("--ratios", type=_float_list, default=[0.5, 1, 2], help="comma-separated h/w ratios")
    p.add_argument("--stride", type=_positive, default=16.0)
    p.add_argument("--feat-h", type=_positive_int, required=True)
    p.add_argument("--feat-w", type=_positive_int, required=True)
    common(p, fmt=("csv", "json"))
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("roialign", help="pool one RoI from a feature map file")
    p.add_argument("--map", required=True, help=".npy array or CSV grid (channels separated by blank lines)")
    p.add_argument("--roi", type=float, nargs=4, metavar=("XMIN", "YMIN", "XMAX", "YMAX"), required=True)
    p.add_argument("--out-size", type=_positive_int, nargs=2, metavar=("H", "W"), default=[7, 7])
    p.add_argument("--samples", type=_positive_int, default=2, help="sample points per bin axis (default 2)")
    p.add_argument("--mode", choices=("average", "max"), default="average")
    p.add_argument("--spatial-scale", type=_positive, default=1.0)
    common(p, fmt=("csv", "json"))
    p.set_defaults(func=cmd_roialign)

    p = sub.add_parser("transform", help="map detections between image and 512x512 model space")
    p.add_argument("--detections", required=True)
    p.add_argument("--direction", choices=("to-model", "to-image"), required=True)
    size = p.add_mutually_exclusive_group()
    size.add_argument("--orig-size", type=_positive, nargs=2, metavar=("W", "H"), help="original image size (default 600 600)")
    size.add_argument("--gt", help="take per-image sizes from this ground truth")
    p.add_argument("--clip", action="store_true", help="clip boxes to the output space")
    p.add_argument("--hflip", action="store_true", help="mirror boxes horizontally in the output space")
    common(p, fmt=None)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("render", help="SVG overlay: ground truth green, predictions red")
    p.add_argument("--gt", required=True)
    p.add_argument("--detections")
    p.add_argument("--image-id", required=True)
    p.add_argument("--image-path", help="image reference written into the SVG (default <image-id>.jpg)")
    p.add_argument("--score-threshold", type=_unit, default=0.0)
    common(p, fmt=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="compare dataset statistics with expected counts")
    p.add_argument("--gt", required=True)
    p.add_argument("--expect-images", type=int, default=9053)
    p.add_argument("--expect-boxes", type=int, default=15435)
    p.add_argument("--expect-classes", type=int, default=8)
    p.add_argument("--expect-size", type=_positive, nargs=2, metavar=("W", "H"), default=[600, 600])
    common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvariantError, AssertionError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, ingest.AnnotationError, ingest.DetectionFormatError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
