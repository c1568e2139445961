import json
import pytest

from pose6d.cli import SynthConfig, ToyRunConfig, cmd_perturb, cmd_synthesize, main
from pose6d.codec import BBox, PoseCode, encode_pose
from pose6d.evaluation import RATE_KEYS, EvalConfig, evaluate, filter_detections
from pose6d.io import DetectionRecord, format_detections, read_scene


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    cmd_synthesize(SynthConfig(seed=3, images=12, objects_per_image=2, points=400), d)
    return d


@pytest.fixture(scope="module")
def scene(scene_dir):
    return read_scene(scene_dir)


def perfect(scene, score=1.0):
    return [DetectionRecord(g.image_id, g.class_id, score, g.bbox, encode_pose(g.pose), g.mask)
            for g in scene.instances]


# -- synthesize ----------------------------------------------------------------------

def test_synthesize_byte_identical(tmp_path):
    spec = write_json(tmp_path / "spec.json", {"seed": 7, "images": 3})
    for name in ("a", "b"):
        assert main(["synthesize", "--spec", spec, "--out", str(tmp_path / name)]) == 0
    for rel in ("scene.txt", "gt.txt", "models/class_1.txt", "models/class_3.txt"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_synthesize_respects_spec(scene):
    assert scene.n_images == 12 and len(scene.instances) == 24
    assert sorted(scene.models) == [1, 2, 3]
    for g in scene.instances:
        x0, y0, x1, y1 = g.bbox.as_array()
        assert 0 <= x0 and x1 <= scene.image_w and 0 <= y0 and y1 <= scene.image_h
        assert 0.6 <= g.pose.translation[2] <= 1.2


def test_synthesize_rejects_unknown_keys(tmp_path, capsys):
    spec = write_json(tmp_path / "spec.json", {"seed": 1, "colour": "red"})
    assert main(["synthesize", "--spec", spec, "--out", str(tmp_path / "x")]) == 2
    assert "unknown spec keys" in capsys.readouterr().err
    with pytest.raises(ValueError):
        SynthConfig(classes=({"id": 1, "shape": "torus"},))


# -- evaluation ---------------------------------------------------------------------

def test_perfect_detections_score_one(scene):
    rep = evaluate(scene, perfect(scene))
    for c in rep["classes"].values():
        assert all(c[k] == 1.0 for k in RATE_KEYS)
    assert all(rep["mean"][k] == 1.0 for k in RATE_KEYS)


def test_no_detections_score_zero(scene):
    rep = evaluate(scene, [])
    assert all(v == 0.0 for v in rep["mean"].values())
    assert rep["n_detections_kept"] == 0


def test_score_threshold_is_strict(scene):
    assert evaluate(scene, perfect(scene, 0.9))["n_detections_kept"] == 0
    assert evaluate(scene, perfect(scene, 0.9), EvalConfig(score_thresh=0.89))["mean"]["acc_add"] == 1.0


def test_small_offsets_pass_5cm5deg_large_fail(scene):
    ok = evaluate(scene, cmd_perturb(scene, 3.0, 3.0, seed=1))
    bad = evaluate(scene, cmd_perturb(scene, 10.0, 3.0, seed=1))
    assert ok["mean"]["acc_5cm5deg"] == 1.0
    assert bad["mean"]["acc_5cm5deg"] == 0.0


def test_duplicates_suppressed_per_image(scene):
    dets = perfect(scene)
    dup = [DetectionRecord(d.image_id, d.class_id, 0.95, d.bbox.shifted(1, 0), d.code, d.mask) for d in dets]
    kept = filter_detections(dets + dup, EvalConfig())
    assert len(kept) == len(dets)
    assert evaluate(scene, dets + dup)["mean"] == evaluate(scene, dets)["mean"]


def test_nms_does_not_cross_images(scene):
    g = scene.instances[0]
    same_box_elsewhere = DetectionRecord((g.image_id + 1) % scene.n_images, g.class_id, 1.0, g.bbox,
                                         PoseCode([0, 0, 0], 1.0))
    kept = filter_detections(perfect(scene) + [same_box_elsewhere], EvalConfig())
    assert len(kept) == len(scene.instances) + 1


def test_evaluation_thread_determinism(scene):
    dets = cmd_perturb(scene, 4.0, 2.0, seed=5)
    one = evaluate(scene, dets, threads=1)
    assert evaluate(scene, dets, threads=4) == one
    assert json.dumps(evaluate(scene, dets, threads=3), sort_keys=True) == json.dumps(one, sort_keys=True)


def test_evaluation_rejects_unknown_class(scene):
    bad = DetectionRecord(0, 9, 1.0, BBox(0, 0, 5, 5), PoseCode([0, 0, 0], 1.0))
    with pytest.raises(ValueError, match="class 9"):
        evaluate(scene, [bad])


def test_eval_config_validation():
    for bad in (dict(score_thresh=1.5), dict(nms_iou=0.0), dict(match_iou=1.0)):
        with pytest.raises(ValueError):
            EvalConfig(**bad)


# -- command line ------------------------------------------------------------------

def test_cli_pipeline_reports_identical(scene_dir, tmp_path, capsys):
    det = str(tmp_path / "det.txt")
    assert main(["perturb", "--gt", str(scene_dir), "--out", det, "--rot-deg", "3", "--trans-cm", "3"]) == 0
    reports = []
    for name in ("r1.json", "r2.json"):
        assert main(["evaluate", "--gt", str(scene_dir), "--det", det, "--report", str(tmp_path / name)]) == 0
        reports.append((tmp_path / name).read_bytes())
    assert reports[0] == reports[1]
    out = capsys.readouterr().out
    assert "acc_5cm5deg" in out and "mean" in out
    assert json.loads(reports[0])["mean"]["acc_5cm5deg"] == 1.0


def test_cli_evaluate_perfect(scene_dir, scene, tmp_path):
    det = tmp_path / "det.txt"
    det.write_text(format_detections(perfect(scene)))
    assert main(["evaluate", "--gt", str(scene_dir), "--det", str(det), "--report", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert all(v == 1.0 for v in rep["mean"].values())


def test_cli_errors_exit_two(scene_dir, tmp_path, capsys):
    det = tmp_path / "det.txt"
    det.write_text("pose6d-detections 1\n0 1 0.95 0 0 10\n")
    assert main(["evaluate", "--gt", str(scene_dir), "--det", str(det)]) == 2
    assert "det.txt:2" in capsys.readouterr().err
    assert main(["evaluate", "--gt", str(tmp_path / "missing"), "--det", str(det)]) == 2
    # a scene that references a model file that is gone
    broken = tmp_path / "broken"
    cmd_synthesize(SynthConfig(images=1, objects_per_image=1), broken)
    (broken / "models" / "class_2.txt").unlink()
    assert main(["perturb", "--gt", str(broken), "--out", str(det)]) == 2
    assert "class_2.txt not found" in capsys.readouterr().err


def test_cli_help_shows_defaults(capsys):
    with pytest.raises(SystemExit) as e:
        main(["evaluate", "--help"])
    assert e.value.code == 0
    out = " ".join(capsys.readouterr().out.split())
    assert "default: 0.9" in out and "default: 0.5" in out and "default: 0.1" in out
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "POSE6D_THREADS" in capsys.readouterr().out


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--instances", "20", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out
    assert main(["gradcheck", "--instances", "5", "--tol", "1e-30"]) == 1


def test_cli_train_toy(tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {"n": 100, "train": {"iterations": 300, "lr_step": 250}})
    out = tmp_path / "run"
    assert main(["train-toy", "--config", cfg, "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["report"]["n_train"] == 80 and doc["config"]["train"]["iterations"] == 300
    assert (out / "mlp.txt").read_text().startswith("pose6d-mlp 1\nwidths 64 64 128 64 4\n")
    with pytest.raises(ValueError):
        ToyRunConfig(train={"momentum": 0.5, "bogus": 1}).train_config()
