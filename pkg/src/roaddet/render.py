"""SVG overlays: ground truth stroked green, predictions stroked red.

Boxes are drawn at their stored coordinates; nothing is resized at render
time. The photo is referenced by path and never decoded.
"""

from __future__ import annotations

from typing import Iterable, Optional
from xml.sax.saxutils import escape, quoteattr

from roaddet.boxgeom import Detection, GroundTruthBox

GT_COLOR = "green"
PRED_COLOR = "red"


def _num(v: float) -> str:
    return repr(float(v))


def _rect(box, color: str, caption: str) -> list[str]:
    x, y = _num(box.x_min), _num(box.y_min)
    return [
        f'  <rect x="{x}" y="{y}" width="{_num(box.width)}" height="{_num(box.height)}" '
        f'fill="none" stroke="{color}" stroke-width="2"/>',
        f'  <text x="{x}" y="{y}" dy="-3" fill="{color}" font-size="12" '
        f'font-family="sans-serif">{escape(caption)}</text>',
    ]


def render_svg(
    width: float,
    height: float,
    ground_truth: Iterable[GroundTruthBox] = (),
    predictions: Iterable[Detection] = (),
    image_href: Optional[str] = None,
) -> str:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{_num(width)}" height="{_num(height)}" viewBox="0 0 {_num(width)} {_num(height)}">',
    ]
    if image_href is not None:
        lines.append(
            f'  <image x="0" y="0" width="{_num(width)}" height="{_num(height)}" '
            f"href={quoteattr(image_href)} xlink:href={quoteattr(image_href)}/>"
        )
    for gt in ground_truth:
        lines += _rect(gt.box, GT_COLOR, gt.label)
    for det in predictions:
        lines += _rect(det.box, PRED_COLOR, f"{det.label} {det.score:.2f}")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
