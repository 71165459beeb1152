import json
import subprocess
import sys

import numpy as np
import pytest

from roaddet.boxgeom import Box, Detection, GroundTruthBox
from roaddet.cli import main
from roaddet.ingest import format_detections, load_detections
from roaddet.suppress import postprocess
from roaddet.synthetic import random_ground_truth


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def gt_as_dets(gt, score=1.0):
    return {k: [Detection(g.box, g.label, score) for g in v] for k, v in gt.items()}


# -- evaluate ----------------------------------------------------------------


def test_evaluate_perfect_copy(write_dataset, capsys):
    gt = {"a": [GroundTruthBox(Box(1, 2, 30, 40), "D00")], "b": [GroundTruthBox(Box(5, 5, 50, 50), "D20")]}
    gt_dir, dets = write_dataset(gt, gt_as_dets(gt))
    code, out, _ = run(["evaluate", "--gt", gt_dir, "--detections", dets], capsys)
    assert code == 0
    assert "mean F1 (pooled): 1.000000" in out


def test_evaluate_empty_predictions(write_dataset, capsys):
    gt_dir, dets = write_dataset({"a": [GroundTruthBox(Box(1, 2, 30, 40), "D00")]})
    dets.write_text("")
    code, out, _ = run(["evaluate", "--gt", gt_dir, "--detections", dets, "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out)["mean_f1"]["pooled"] == 0.0


def test_evaluate_two_image_fixture(write_dataset, two_image_fixture, capsys):
    gt_dir, dets = write_dataset(*two_image_fixture)
    code, out, _ = run(["evaluate", "--gt", gt_dir, "--detections", dets], capsys)
    assert code == 0
    assert "mean F1 (pooled): 0.500000" in out
    assert "mean F1 (macro): 0.333333" in out
    code, out, _ = run(["evaluate", "--gt", gt_dir, "--detections", dets, "--format", "json", "--headline", "macro"], capsys)
    data = json.loads(out)
    assert data["pooled"] == {"tp": 1, "fp": 1, "fn": 1, "precision": 0.5, "recall": 0.5, "f1": 0.5}
    assert data["headline"] == {"aggregation": "macro", "f1": pytest.approx(1 / 3)}
    assert data["per_class"]["D00"]["tp"] == 1


def test_evaluate_score_threshold(write_dataset, two_image_fixture, capsys):
    gt_dir, dets = write_dataset(*two_image_fixture)
    _, out, _ = run(["evaluate", "--gt", gt_dir, "--detections", dets, "--score-threshold", "0.5", "--format", "json"], capsys)
    assert json.loads(out)["pooled"]["fp"] == 0


def test_evaluate_unknown_image_warns(write_dataset, capsys):
    gt = {"a": [GroundTruthBox(Box(1, 2, 30, 40), "D00")]}
    dets = {**gt_as_dets(gt), "zzz": [Detection(Box(0, 0, 1, 1), "D00", 0.5)]}
    gt_dir, det_path = write_dataset(gt, dets)
    code, out, err = run(["evaluate", "--gt", gt_dir, "--detections", det_path, "--format", "json"], capsys)
    assert code == 0 and "no ground truth" in err
    assert json.loads(out)["pooled"]["fp"] == 1


def test_evaluate_workers_byte_identical(write_dataset, tmp_path, capsys):
    rng = np.random.default_rng(0)
    gt = {f"i{k:03d}": random_ground_truth(rng, 3) for k in range(60)}
    dets = {k: [Detection(g.box.translate(rng.uniform(-20, 20), 0), g.label, 0.5) for g in v] for k, v in gt.items()}
    gt_dir, det_path = write_dataset(gt, dets)
    outs = []
    for w in (1, 3):
        out = tmp_path / f"r{w}.json"
        assert run(["evaluate", "--gt", gt_dir, "--detections", det_path, "--format", "json", "--workers", w, "--out", out], capsys)[0] == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_evaluate_missing_input(tmp_path, capsys):
    code, _, err = run(["evaluate", "--gt", tmp_path / "none", "--detections", tmp_path / "x.csv"], capsys)
    assert code == 2 and "not found" in err


def test_evaluate_bad_rows_exit_2_without_output(write_dataset, tmp_path, capsys):
    gt_dir, dets = write_dataset({"a": []})
    dets.write_text("image_id,label,score,xmin,ymin,xmax,ymax\na,D00,2.0,0,0,1,1\n")
    out = tmp_path / "report.txt"
    code, _, err = run(["evaluate", "--gt", gt_dir, "--detections", dets, "--out", out], capsys)
    assert code == 2 and "line 2" in err
    assert not out.exists()


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as e:
        main(["evaluate", "--gt", "x"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["postprocess", "--detections", "x", "--threshold", "1.5"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["transform", "--detections", "x", "--direction", "to-model", "--gt", "g", "--orig-size", "1", "1"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1


def test_invariant_violation_exit_3(monkeypatch, write_dataset, two_image_fixture, capsys):
    from roaddet import cli
    from roaddet.evaluate import Counts

    gt_dir, dets = write_dataset(*two_image_fixture)
    real = cli.evaluate_dataset

    def broken(*a, **k):
        report = real(*a, **k)
        report.pooled = Counts(tp=99)
        return report

    monkeypatch.setattr(cli, "evaluate_dataset", broken)
    code, _, err = run(["evaluate", "--gt", gt_dir, "--detections", dets], capsys)
    assert code == 3 and "count identities" in err


# -- postprocess / nms -------------------------------------------------------


def test_postprocess_duplicate_pair(tmp_path, capsys):
    src = tmp_path / "d.csv"
    src.write_text(format_detections({"a": [
        Detection(Box(0, 0, 10, 9), "D00", 0.9),
        Detection(Box(0, 0, 10, 10), "D00", 0.3),
    ]}))
    out = tmp_path / "o.csv"
    assert run(["postprocess", "--detections", src, "--out", out], capsys)[0] == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 2
    assert rows[1] == "a,D00,0.3,0.0,0.0,10.0,10.0"


def test_postprocess_no_overlap_passthrough(tmp_path, capsys):
    src = tmp_path / "d.csv"
    src.write_text(format_detections({"a": [Detection(Box(0, 0, 10, 10), "D00", 0.9)], "b": [Detection(Box(5, 5, 9, 9), "D10", 0.1)]}))
    out = tmp_path / "o.csv"
    assert run(["postprocess", "--detections", src, "--out", out], capsys)[0] == 0
    assert out.read_bytes() == src.read_bytes()


def test_postprocess_matches_library(tmp_path, capsys):
    rng = np.random.default_rng(11)
    dets = {}
    for k in range(1000):
        image_id = f"img{rng.integers(0, 40):02d}"
        x, y = rng.integers(0, 100, 2)
        w, h = rng.integers(5, 20, 2)
        dets.setdefault(image_id, []).append(
            Detection(Box(x, y, x + w, y + h), str(rng.choice(["D00", "D10"])), float(rng.uniform()))
        )
    src = tmp_path / "d.csv"
    src.write_text(format_detections(dets))
    expected = format_detections({k: postprocess(v, 0.85) for k, v in load_detections(src).items()})
    for workers in (1, 4):
        out = tmp_path / f"o{workers}.csv"
        assert run(["postprocess", "--detections", src, "--out", out, "--workers", workers], capsys)[0] == 0
        assert out.read_text() == expected


def test_postprocess_score_filter_then_submission(tmp_path, capsys):
    src = tmp_path / "d.csv"
    src.write_text(format_detections({"a": [
        Detection(Box(0, 0, 10, 10), "D00", 0.2),
        Detection(Box(0, 0, 10, 9), "D00", 0.9),
    ]}))
    code, out, _ = run(["postprocess", "--detections", src, "--score-threshold", "0.5", "--submission"], capsys)
    assert code == 0
    assert out == "a.jpg,D00 0 0 10 9\n"


def test_nms_subcommand(tmp_path, capsys):
    src = tmp_path / "d.csv"
    src.write_text(format_detections({"a": [
        Detection(Box(0, 0, 10, 10), "D00", 0.5),
        Detection(Box(0, 0, 10, 10), "D40", 0.8),
        Detection(Box(30, 30, 40, 40), "D00", 0.7),
        Detection(Box(60, 60, 70, 70), "D00", 0.1),
    ]}))
    code, out, _ = run(["nms", "--detections", src, "--top-n", "2"], capsys)
    assert code == 0
    assert out.splitlines()[1:] == ["a,D40,0.8,0.0,0.0,10.0,10.0", "a,D00,0.7,30.0,30.0,40.0,40.0"]


# -- anchors / roialign ------------------------------------------------------


def test_anchors_single(capsys):
    code, out, _ = run(["anchors", "--scales", "32", "--ratios", "1", "--stride", "16", "--feat-h", "1", "--feat-w", "1"], capsys)
    assert code == 0
    assert out == "xmin,ymin,xmax,ymax\n-8.0,-8.0,24.0,24.0\n"


def test_anchors_json(capsys):
    code, out, _ = run(["anchors", "--scales", "32,64,128", "--feat-h", "2", "--feat-w", "2", "--format", "json"], capsys)
    data = json.loads(out)
    assert data["k"] == 9 and len(data["anchors"]) == 36


def test_anchors_bad_list(capsys):
    with pytest.raises(SystemExit) as e:
        main(["anchors", "--scales", "a,b", "--feat-h", "1", "--feat-w", "1"])
    assert e.value.code == 1


def test_roialign_constant_csv(tmp_path, capsys):
    grid = tmp_path / "map.csv"
    grid.write_text("\n".join(",".join(["2.5"] * 6) for _ in range(5)) + "\n\n" + "\n".join(",".join(["-1"] * 6) for _ in range(5)) + "\n")
    code, out, _ = run(["roialign", "--map", grid, "--roi", "0.5", "0.5", "4", "3.5", "--out-size", "2", "3"], capsys)
    assert code == 0
    assert out == "2.5,2.5,2.5\n2.5,2.5,2.5\n\n-1.0,-1.0,-1.0\n-1.0,-1.0,-1.0\n"


def test_roialign_npy_max(tmp_path, capsys):
    p = tmp_path / "m.npy"
    np.save(p, np.arange(16.0).reshape(4, 4))
    code, out, _ = run(["roialign", "--map", p, "--roi", "0", "0", "2", "2", "--out-size", "1", "1", "--mode", "max", "--format", "json"], capsys)
    assert code == 0
    # samples at 0.5 and 1.5 on each axis: max is at (1.5, 1.5) = 7.5
    assert json.loads(out) == {"shape": [1, 1, 1], "values": [[[7.5]]]}


def test_roialign_ragged_map(tmp_path, capsys):
    grid = tmp_path / "map.csv"
    grid.write_text("1,2\n3\n")
    code, _, err = run(["roialign", "--map", grid, "--roi", "0", "0", "1", "1"], capsys)
    assert code == 2 and "ragged" in err


def test_roialign_degenerate_roi(tmp_path, capsys):
    grid = tmp_path / "map.csv"
    grid.write_text("1,2\n3,4\n")
    code, _, err = run(["roialign", "--map", grid, "--roi", "1", "0", "1", "1"], capsys)
    assert code == 2


# -- transform / render / validate -------------------------------------------


def test_transform_roundtrip(tmp_path, capsys):
    src = tmp_path / "d.csv"
    src.write_text(format_detections({"a": [Detection(Box(150, 300, 450, 600), "D00", 0.5)]}))
    mid, back = tmp_path / "m.csv", tmp_path / "b.csv"
    assert run(["transform", "--detections", src, "--direction", "to-model", "--out", mid], capsys)[0] == 0
    box = load_detections(mid)["a"][0].box
    assert box.as_tuple() == pytest.approx((128, 256, 384, 512), abs=1e-9)
    assert run(["transform", "--detections", mid, "--direction", "to-image", "--out", back], capsys)[0] == 0
    assert load_detections(back)["a"][0].box.as_tuple() == pytest.approx((150, 300, 450, 600), abs=1e-9)


def test_transform_hflip_uses_gt_sizes(write_dataset, capsys):
    gt_dir, src = write_dataset(
        {"a": [GroundTruthBox(Box(0, 0, 1, 1), "D00")]},
        {"a": [Detection(Box(0, 0, 100, 50), "D00", 0.5)]},
        size=(1024, 512),
    )
    code, out, _ = run(["transform", "--detections", src, "--direction", "to-model", "--gt", gt_dir, "--hflip"], capsys)
    assert code == 0
    row = out.splitlines()[1].split(",")
    assert [float(v) for v in row[3:]] == pytest.approx([462, 0, 512, 50])


def test_transform_hflip_outside_is_input_error(tmp_path, capsys):
    src = tmp_path / "d.csv"
    src.write_text(format_detections({"a": [Detection(Box(-5, 0, 10, 10), "D00", 0.5)]}))
    assert run(["transform", "--detections", src, "--direction", "to-model", "--hflip"], capsys)[0] == 2
    assert run(["transform", "--detections", src, "--direction", "to-model", "--hflip", "--clip"], capsys)[0] == 0


def test_render_one_gt_one_pred(write_dataset, tmp_path, capsys):
    gt_dir, dets = write_dataset(
        {"a": [GroundTruthBox(Box(10, 20, 110, 220), "D00")]},
        {"a": [Detection(Box(12.5, 22, 100, 200), "D00", 0.87)]},
    )
    out = tmp_path / "a.svg"
    code, _, _ = run(["render", "--gt", gt_dir, "--detections", dets, "--image-id", "a", "--out", out], capsys)
    assert code == 0
    svg = out.read_text()
    import xml.etree.ElementTree as ET

    root = ET.fromstring(svg)
    ns = {"s": "http://www.w3.org/2000/svg"}
    rects = root.findall("s:rect", ns)
    assert len(rects) == 2
    assert [r.get("stroke") for r in rects] == ["green", "red"]
    assert [float(rects[1].get(k)) for k in ("x", "y", "width", "height")] == [12.5, 22, 87.5, 178]
    assert [float(rects[0].get(k)) for k in ("x", "y", "width", "height")] == [10, 20, 100, 200]
    assert root.find("s:image", ns).get("href") == "a.jpg"
    assert "D00 0.87" in svg
    assert root.get("width") == "600.0"


def test_render_without_predictions(write_dataset, capsys):
    gt_dir, dets = write_dataset({"a": [GroundTruthBox(Box(1, 1, 5, 5), "D00"), GroundTruthBox(Box(7, 7, 9, 9), "D40")]})
    code, out, _ = run(["render", "--gt", gt_dir, "--detections", dets, "--image-id", "a", "--image-path", "imgs/a.jpg"], capsys)
    assert code == 0
    assert out.count("<rect") == 2 and 'stroke="red"' not in out
    assert 'href="imgs/a.jpg"' in out


def test_render_unknown_image(write_dataset, capsys):
    gt_dir, _ = write_dataset({"a": []})
    code, _, err = run(["render", "--gt", gt_dir, "--image-id", "zz"], capsys)
    assert code == 2 and "zz" in err


def test_validate_two_files(write_dataset, capsys):
    gt_dir, _ = write_dataset({"a": [GroundTruthBox(Box(0, 0, 650, 5), "D00")], "b": []})
    code, out, _ = run(["validate", "--gt", gt_dir], capsys)
    assert code == 0
    assert "status: MISMATCH (3 finding(s))" in out
    assert out.count("finding: ") == 3
    assert "note: annotation integers are read as boundary coordinates" in out
    code, out, _ = run(["validate", "--gt", gt_dir, "--format", "json", "--expect-images", "2", "--expect-boxes", "1", "--expect-classes", "1"], capsys)
    data = json.loads(out)
    assert data["passed"] is True
    assert data["observed"]["label_counts"] == {"D00": 1}


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "roaddet.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("evaluate", "postprocess", "nms", "anchors", "roialign", "transform", "render", "validate"):
        assert name in res.stdout
