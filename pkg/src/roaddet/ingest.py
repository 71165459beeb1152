"""Annotation and detection file I/O, dataset checks, and the 512x512 resize mapping.

Ground truth is read from VOC-style XML (one file per image) or from a CSV
with header ``image_id,label,xmin,ymin,xmax,ymax``. Detections use the CSV
header ``image_id,label,score,xmin,ymin,xmax,ymax``. Stored integer
coordinates are taken as boundary coordinates, so a box touching the right
edge of a 600-wide image has ``xmax == 600``.
"""

from __future__ import annotations

import csv
import io
import os
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from roaddet.boxgeom import Box, Detection, GroundTruthBox, clip_box, scale_box

MODEL_SIDE = 512
DETECTION_HEADER = ["image_id", "label", "score", "xmin", "ymin", "xmax", "ymax"]
GT_HEADER = ["image_id", "label", "xmin", "ymin", "xmax", "ymax"]
MAX_REPORTED_ERRORS = 10

BOUNDARY_NOTE = (
    "annotation integers are read as boundary coordinates "
    "(a full-width box on a 600 px image ends at 600, not 599)"
)


class AnnotationError(ValueError):
    pass


class DetectionFormatError(ValueError):
    """Raised with every bad row's line number; ``errors`` holds all messages."""

    def __init__(self, path, errors: list[str]):
        self.path = path
        self.errors = errors
        shown = "\n  ".join(errors[:MAX_REPORTED_ERRORS])
        more = len(errors) - MAX_REPORTED_ERRORS
        tail = f"\n  ... and {more} more" if more > 0 else ""
        super().__init__(f"{path}: {len(errors)} bad row(s)\n  {shown}{tail}")


@dataclass
class ImageEntry:
    image_id: str
    width: Optional[float]
    height: Optional[float]
    annotations: list[GroundTruthBox]
    warnings: list[str] = field(default_factory=list)


@dataclass
class DatasetManifest:
    images: dict[str, ImageEntry]

    @property
    def label_counts(self) -> Counter:
        return Counter(a.label for e in self.images.values() for a in e.annotations)

    @property
    def box_count(self) -> int:
        return sum(len(e.annotations) for e in self.images.values())

    @property
    def warnings(self) -> list[str]:
        return [w for e in self.images.values() for w in e.warnings]


# -- VOC XML -----------------------------------------------------------------


def _required(node, tag: str, where: str):
    child = node.find(tag)
    if child is None or child.text is None or not child.text.strip():
        raise AnnotationError(f"{where}: missing <{tag}>")
    return child.text.strip()


def _number(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise AnnotationError(f"{where}: not a number: {text!r}") from None


def parse_voc_annotation(xml_text: str, source: str = "<string>"):
    """Parse one VOC annotation.

    Returns ``((width, height), boxes, warnings)``. Boxes reaching outside the
    image are clipped to it and reported in ``warnings``.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as e:
        raise AnnotationError(f"{source}: malformed XML: {e}") from None
    size = root.find("size")
    if size is None:
        raise AnnotationError(f"{source}: missing <size>")
    width = _number(_required(size, "width", source), source)
    height = _number(_required(size, "height", source), source)
    if width <= 0 or height <= 0:
        raise AnnotationError(f"{source}: non-positive image size {width}x{height}")

    boxes = []
    warnings = []
    for k, obj in enumerate(root.findall("object")):
        where = f"{source}: object {k}"
        label = _required(obj, "name", where)
        bnd = obj.find("bndbox")
        if bnd is None:
            raise AnnotationError(f"{where}: missing <bndbox>")
        x1, y1, x2, y2 = (_number(_required(bnd, t, where), where) for t in ("xmin", "ymin", "xmax", "ymax"))
        if x1 > x2 or y1 > y2:
            raise AnnotationError(f"{where}: corners out of order ({x1}, {y1}, {x2}, {y2})")
        raw = Box(x1, y1, x2, y2)
        box = clip_box(raw, width, height)
        if box != raw:
            warnings.append(f"{where}: clipped {raw.as_tuple()} to {box.as_tuple()} in {width:g}x{height:g} image")
            if box.width == 0 or box.height == 0:
                warnings.append(f"{where}: zero area after clipping")
        boxes.append(GroundTruthBox(box, label))
    return (width, height), boxes, warnings


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def to_voc_xml(image_id: str, width: float, height: float, boxes: Iterable[GroundTruthBox]) -> str:
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = f"{image_id}.jpg"
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = _fmt(width)
    ET.SubElement(size, "height").text = _fmt(height)
    ET.SubElement(size, "depth").text = "3"
    for gt in boxes:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = gt.label
        bnd = ET.SubElement(obj, "bndbox")
        for tag, v in zip(("xmin", "ymin", "xmax", "ymax"), gt.box.as_tuple()):
            ET.SubElement(bnd, tag).text = _fmt(v)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def load_voc_dir(path) -> DatasetManifest:
    """Read every ``*.xml`` under ``path``; the image id is the file stem."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"annotation directory not found: {path}")
    images = {}
    for f in sorted(path.glob("*.xml")):
        (w, h), boxes, warns = parse_voc_annotation(f.read_text(encoding="utf-8"), source=str(f))
        images[f.stem] = ImageEntry(f.stem, w, h, boxes, warns)
    return DatasetManifest(images)


# -- CSV ---------------------------------------------------------------------


def _read_rows(path, header: list[str]):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return [], []
    reader = csv.reader(io.StringIO(text))
    first = next(reader)
    if [c.strip() for c in first] != header:
        raise DetectionFormatError(path, [f"line 1: expected header {','.join(header)}, got {','.join(first)}"])
    rows = []
    errors = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            errors.append((line_no, f"line {line_no}: expected {len(header)} fields, got {len(row)}"))
            continue
        rows.append((line_no, row))
    return rows, errors


def load_detections(path) -> dict[str, list[Detection]]:
    """Read a detection CSV into ``image_id -> detections`` (file order kept)."""
    rows, errors = _read_rows(path, DETECTION_HEADER)
    out: dict[str, list[Detection]] = {}
    for line_no, (image_id, label, *nums) in rows:
        try:
            score, x1, y1, x2, y2 = (float(v) for v in nums)
            if not image_id:
                raise ValueError("empty image_id")
            det = Detection(Box(x1, y1, x2, y2), label, score)
        except ValueError as e:
            errors.append((line_no, f"line {line_no}: {e}"))
            continue
        out.setdefault(image_id, []).append(det)
    if errors:
        raise DetectionFormatError(path, [msg for _, msg in sorted(errors)])
    return out


def load_gt_csv(path) -> DatasetManifest:
    """Ground truth from CSV. Image sizes are unknown in this format."""
    rows, errors = _read_rows(path, GT_HEADER)
    images: dict[str, ImageEntry] = {}
    for line_no, (image_id, label, *nums) in rows:
        try:
            x1, y1, x2, y2 = (float(v) for v in nums)
            if not image_id:
                raise ValueError("empty image_id")
            gt = GroundTruthBox(Box(x1, y1, x2, y2), label)
        except ValueError as e:
            errors.append((line_no, f"line {line_no}: {e}"))
            continue
        images.setdefault(image_id, ImageEntry(image_id, None, None, [])).annotations.append(gt)
    if errors:
        raise DetectionFormatError(path, [msg for _, msg in sorted(errors)])
    return DatasetManifest(images)


def load_ground_truth(path) -> DatasetManifest:
    """A VOC directory or a ground-truth CSV file, by what ``path`` is."""
    path = Path(path)
    if path.is_dir():
        return load_voc_dir(path)
    if not path.exists():
        raise FileNotFoundError(f"ground truth not found: {path}")
    return load_gt_csv(path)


def format_detections(dets: Mapping[str, Iterable[Detection]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DETECTION_HEADER)
    for image_id, rows in dets.items():
        for d in rows:
            writer.writerow([image_id, d.label, repr(float(d.score)), *(repr(float(v)) for v in d.box.as_tuple())])
    return buf.getvalue()


def format_ground_truth_csv(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GT_HEADER)
    for image_id, entry in manifest.images.items():
        for gt in entry.annotations:
            writer.writerow([image_id, gt.label, *(repr(float(v)) for v in gt.box.as_tuple())])
    return buf.getvalue()


def format_submission(dets: Mapping[str, Iterable[Detection]], image_ids: Optional[Iterable[str]] = None) -> str:
    """Best-effort challenge submission text.

    One line per image: ``<image_id>.jpg,label x1 y1 x2 y2 label x1 ...`` with
    coordinates rounded to integers. Images listed in ``image_ids`` but
    without detections get an empty prediction field.
    """
    ids = list(dets) if image_ids is None else list(image_ids)
    lines = []
    for image_id in ids:
        groups = []
        for d in dets.get(image_id, ()):
            coords = " ".join(str(int(round(v))) for v in d.box.as_tuple())
            groups.append(f"{d.label} {coords}")
        lines.append(f"{image_id}.jpg,{' '.join(groups)}")
    return "\n".join(lines) + ("\n" if lines else "")


# -- dataset checks ----------------------------------------------------------


@dataclass(frozen=True)
class DatasetExpectations:
    images: Optional[int] = 9053
    boxes: Optional[int] = 15435
    classes: Optional[int] = 8
    width: Optional[float] = 600
    height: Optional[float] = 600


@dataclass
class ValidationReport:
    observed: dict
    expected: dict
    findings: list[str]
    notes: list[str] = field(default_factory=lambda: [BOUNDARY_NOTE])

    @property
    def passed(self) -> bool:
        return not self.findings

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "observed": self.observed,
            "expected": self.expected,
            "findings": self.findings,
            "notes": self.notes,
        }


def validate_dataset(manifest: DatasetManifest, expectations: DatasetExpectations = DatasetExpectations()) -> ValidationReport:
    labels = manifest.label_counts
    observed = {
        "images": len(manifest.images),
        "boxes": manifest.box_count,
        "classes": len(labels),
        "label_counts": dict(sorted(labels.items())),
    }
    exp = expectations
    expected = {"images": exp.images, "boxes": exp.boxes, "classes": exp.classes, "width": exp.width, "height": exp.height}
    findings = []
    for key in ("images", "boxes", "classes"):
        want = expected[key]
        if want is not None and observed[key] != want:
            findings.append(f"{key}: expected {want}, observed {observed[key]}")
    if exp.width is not None or exp.height is not None:
        for image_id, e in manifest.images.items():
            if e.width is None:
                continue
            if (exp.width is not None and e.width != exp.width) or (exp.height is not None and e.height != exp.height):
                findings.append(
                    f"resolution: image {image_id} is {e.width:g}x{e.height:g}, expected {exp.width:g}x{exp.height:g}"
                )
    return ValidationReport(observed, expected, findings)


# -- resize mapping ----------------------------------------------------------


def to_model_space(b: Box, orig_w: float, orig_h: float, side: float = MODEL_SIDE) -> Box:
    if orig_w <= 0 or orig_h <= 0:
        raise ValueError(f"image dimensions must be positive, got {orig_w}x{orig_h}")
    return scale_box(b, side / orig_w, side / orig_h)


def to_image_space(b: Box, orig_w: float, orig_h: float, side: float = MODEL_SIDE) -> Box:
    if orig_w <= 0 or orig_h <= 0:
        raise ValueError(f"image dimensions must be positive, got {orig_w}x{orig_h}")
    return scale_box(b, orig_w / side, orig_h / side)


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` via a temp file in the same directory and rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
