import pytest

from roaddet.boxgeom import Box, Detection, GroundTruthBox
from roaddet.ingest import format_detections, to_voc_xml


@pytest.fixture
def write_dataset(tmp_path):
    """Write ``{image_id: [GroundTruthBox]}`` as VOC XML and detections as CSV."""

    def write(gt, dets=None, size=(600, 600)):
        gt_dir = tmp_path / "gt"
        gt_dir.mkdir(exist_ok=True)
        for image_id, boxes in gt.items():
            (gt_dir / f"{image_id}.xml").write_text(to_voc_xml(image_id, *size, boxes))
        det_path = tmp_path / "dets.csv"
        det_path.write_text(format_detections(dets or {}))
        return gt_dir, det_path

    return write


@pytest.fixture
def two_image_fixture():
    gt = {
        "im1": [GroundTruthBox(Box(0, 0, 10, 10), "D00")],
        "im2": [GroundTruthBox(Box(0, 0, 10, 10), "D00")],
    }
    dets = {
        "im1": [Detection(Box(0, 0, 10, 10), "D00", 0.9), Detection(Box(50, 50, 60, 60), "D00", 0.4)],
    }
    return gt, dets


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
