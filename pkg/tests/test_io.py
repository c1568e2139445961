import numpy as np
import pytest

from pose6d.codec import BBox, PoseCode
from pose6d.io import (
    DetectionRecord,
    GTRecord,
    ParseError,
    Scene,
    fmt,
    format_detections,
    format_gt,
    format_intrinsics,
    format_mlp,
    format_model,
    format_pose,
    parse_detections,
    parse_gt,
    parse_intrinsics,
    parse_mlp,
    parse_model,
    parse_pose,
    read_scene,
    rle_decode,
    rle_encode,
    thread_count,
    write_scene,
)
from pose6d.metrics import ObjectModel
from pose6d.pose_head import init_mlp
from pose6d.so3 import Intrinsics, Pose, exp_map
from pose6d.synthetic import make_model


def random_pose(rng):
    return Pose(exp_map(rng.normal(size=3)), rng.normal(size=3))


def random_mask(rng, h=9, w=13):
    return rng.random((h, w)) < 0.4


def random_box(rng):
    x, y = rng.uniform(0, 600, 2)
    return BBox(x, y, x + rng.uniform(1, 40), y + rng.uniform(1, 40))


def test_fmt_round_trips_bits():
    rng = np.random.default_rng(0)
    for v in np.concatenate([rng.normal(size=1000) * 10.0 ** rng.integers(-300, 300, 1000),
                             [0.1, 1 / 3, np.pi, 5e-324, 1.7976931348623157e308, -0.0]]):
        assert float(fmt(v)).hex() == float(v).hex() or (v == 0 and float(fmt(v)) == 0)


def test_intrinsics_round_trip_and_example():
    k = Intrinsics(572.4, 573.6, 325.3, 242.0)
    assert parse_intrinsics(format_intrinsics(k)) == k
    assert format_intrinsics(k) == "pose6d-intrinsics 1\n572.39999999999998 573.60000000000002 325.30000000000001 242\n"


def test_identity_pose_file():
    text = "pose6d-pose 1\n1 0 0 0\n0 1 0 0\n0 0 1 0\n"
    assert format_pose(Pose(np.eye(3), np.zeros(3))) == text
    p = parse_pose(text)
    assert np.array_equal(p.rotation, np.eye(3)) and np.array_equal(p.translation, np.zeros(3))


def test_pose_round_trip_bit_exact():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = random_pose(rng)
        q = parse_pose(format_pose(p))
        assert np.array_equal(p.rotation, q.rotation) and np.array_equal(p.translation, q.translation)


@pytest.mark.parametrize("with_parts", [True, False])
def test_model_round_trip(with_parts):
    m = make_model("asymmetric-blob", 300, seed=2)
    if not with_parts:
        m = ObjectModel(m.points, name="plain")
    back = parse_model(format_model(m), "m.txt")
    assert np.array_equal(back.points, m.points)
    assert back.diameter == m.diameter and back.name == m.name
    assert (back.parts is None) == (m.parts is None)
    if m.parts is not None:
        assert np.array_equal(back.parts, m.parts)


def test_rle_examples():
    m = np.array([[0, 1, 1], [1, 0, 0]], bool)
    assert rle_encode(m) == "2x3:1,3,2"
    assert rle_encode(np.ones((1, 2), bool)) == "1x2:0,2"
    assert rle_encode(np.zeros((2, 2), bool)) == "2x2:4"
    assert np.array_equal(rle_decode("2x3:1,3,2"), m)
    for bad in ["2x3:1,3", "2x3:1,-1,6"]:
        with pytest.raises(ValueError):
            rle_decode(bad)


def test_rle_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(100):
        m = random_mask(rng, *rng.integers(1, 20, 2))
        assert np.array_equal(rle_decode(rle_encode(m)), m)


def test_gt_round_trip_1000_records():
    rng = np.random.default_rng(4)
    recs = [GTRecord(int(rng.integers(10)), int(rng.integers(1, 4)), random_box(rng), random_pose(rng),
                     random_mask(rng) if rng.random() < 0.5 else None) for _ in range(1000)]
    back = parse_gt(format_gt(recs))
    assert len(back) == 1000
    for a, b in zip(recs, back):
        assert (a.image_id, a.class_id, a.bbox) == (b.image_id, b.class_id, b.bbox)
        assert np.array_equal(a.pose.matrix(), b.pose.matrix())
        assert (a.mask is None and b.mask is None) or np.array_equal(a.mask, b.mask)


def test_detections_round_trip_1000_records():
    rng = np.random.default_rng(5)
    dets = [DetectionRecord(int(rng.integers(10)), int(rng.integers(1, 4)), float(rng.random()), random_box(rng),
                            PoseCode(rng.normal(size=3), rng.uniform(0.1, 3)),
                            random_mask(rng) if rng.random() < 0.5 else None) for _ in range(1000)]
    text = format_detections(dets)
    assert parse_detections(text) == dets
    assert format_detections(parse_detections(text)) == text


def test_detection_score_range():
    with pytest.raises(ValueError):
        DetectionRecord(0, 1, 1.5, BBox(0, 0, 1, 1), PoseCode([0, 0, 0], 1.0))


def test_mlp_round_trip():
    mlp = init_mlp(12, (8, 6, 5, 4), seed=7)
    assert parse_mlp(format_mlp(mlp)) == mlp


def test_scene_round_trip(tmp_path):
    models = {1: make_model("box", 50, seed=0), 4: make_model("cylinder", 60, seed=1)}
    rng = np.random.default_rng(6)
    inst = [GTRecord(0, 1, random_box(rng), random_pose(rng), random_mask(rng)),
            GTRecord(2, 4, random_box(rng), random_pose(rng), None)]
    scene = Scene(Intrinsics(500, 510, 320, 240), 640, 480, 3, models, inst)
    write_scene(scene, tmp_path)
    back = read_scene(tmp_path)
    assert back.intrinsics == scene.intrinsics and (back.image_w, back.image_h, back.n_images) == (640, 480, 3)
    assert sorted(back.models) == [1, 4]
    assert np.array_equal(back.models[4].points, models[4].points)
    assert format_gt(back.instances) == format_gt(inst)


def test_scene_validation():
    m = {1: make_model("box", 50, seed=0)}
    g = GTRecord(0, 2, BBox(0, 0, 1, 1), Pose(np.eye(3), [0, 0, 1]))
    with pytest.raises(ValueError, match="class 2"):
        Scene(Intrinsics(500, 500, 320, 240), 640, 480, 1, m, [g])
    g = GTRecord(1, 1, BBox(0, 0, 1, 1), Pose(np.eye(3), [0, 0, 1]))
    with pytest.raises(ValueError, match="image id"):
        Scene(Intrinsics(500, 500, 320, 240), 640, 480, 1, m, [g])


def test_missing_model_file_reported(tmp_path):
    models = {1: make_model("box", 50, seed=0)}
    write_scene(Scene(Intrinsics(500, 500, 320, 240), 640, 480, 1, models, []), tmp_path)
    (tmp_path / "models" / "class_1.txt").unlink()
    with pytest.raises(ParseError, match="scene.txt:6: model file"):
        read_scene(tmp_path)


@pytest.mark.parametrize("parse, text, line, msg", [
    (parse_pose, "pose6d-pose 2\n1 0 0 0\n", 1, "version"),
    (parse_pose, "pose6d-model 1\n", 1, "expected header"),
    (parse_model, "pose6d-model 1\nname -\n", 3, "end of file"),
    (parse_pose, "# comment\n\npose6d-pose 1\n1 0 0 0\n0 1 0\n0 0 1 0\n", 5, "expected 4 fields"),
    (parse_pose, "pose6d-pose 1\n1 0 0 0\n0 1 0 0\n0 0 1 nan\n", 4, "non-finite"),
    (parse_pose, "pose6d-pose 1\n1 0 0 0\n0 1 0 0\n0 0 2 0\n", 4, "not a rotation"),
    (parse_intrinsics, "pose6d-intrinsics 1\n500 500 x 240\n", 2, "could not convert"),
    (parse_detections, "pose6d-detections 1\n0 1 0.5 0 0 1 1 0 0 0 1 -\n0 1 2 0 0 1 1 0 0 0 1 -\n", 3, "score"),
    (parse_gt, "pose6d-gt 1\ninstances 1\n0 1 0 0 1 1\n", 3, "19 fields"),
    (parse_gt, "pose6d-gt 1\ninstances 1\n0 1 0 0 1 1 1 0 0 0 0 1 0 0 0 0 -1 1 -\n", 3, "not a rotation"),
    (parse_model, "pose6d-model 1\nname a\npoints 4 noparts\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 0 2\n", 8,
     "trailing"),
    (parse_mlp, "pose6d-mlp 1\nwidths 2 2 2 2\n", 2, "input width"),
])
def test_parse_errors_name_line(parse, text, line, msg):
    with pytest.raises(ParseError, match=msg) as e:
        parse(text, "f.txt")
    assert e.value.line == line and str(e.value).startswith(f"f.txt:{line}:")


def test_thread_count(monkeypatch):
    monkeypatch.delenv("POSE6D_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("POSE6D_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("POSE6D_THREADS", "zero")
    assert thread_count() == 1
