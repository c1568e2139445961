"""Line-oriented text formats for models, cameras, poses, scenes, detections
and network checkpoints.

Every file starts with ``pose6d-<kind> <version>``. Floats are written with
17 significant digits so ``parse(write(v)) == v`` bit for bit. Parse errors
name the file and line.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .codec import BBox, PoseCode
from .metrics import ObjectModel
from .pose_head import MLP
from .so3 import Intrinsics, Pose, check_rotation

VERSION = 1


class ParseError(ValueError):
    def __init__(self, source, line: int, msg: str):
        super().__init__(f"{source}:{line}: {msg}")
        self.source = str(source)
        self.line = line


def fmt(x: float) -> str:
    s = format(float(x), ".17g")
    return "0" if s == "-0" and math.copysign(1.0, x) > 0 else s


def _fmts(values: Iterable[float]) -> str:
    return " ".join(fmt(v) for v in values)


class _Reader:
    """Line cursor with error reporting; blank lines and ``#`` comments are skipped."""

    def __init__(self, text: str, source="<string>"):
        self.source = source
        self.lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
        self.lines = [(i, ln) for i, ln in self.lines if ln and not ln.startswith("#")]
        self.pos = 0
        self.last = 0

    def error(self, msg, line=None):
        return ParseError(self.source, self.last if line is None else line, msg)

    def next(self) -> list[str]:
        if self.pos >= len(self.lines):
            raise ParseError(self.source, self.last + 1, "unexpected end of file")
        self.last, ln = self.lines[self.pos]
        self.pos += 1
        return ln.split()

    def done(self) -> bool:
        return self.pos >= len(self.lines)

    def header(self, kind: str):
        tok = self.next()
        if len(tok) != 2 or tok[0] != f"pose6d-{kind}":
            raise self.error(f"expected header 'pose6d-{kind} {VERSION}'")
        if tok[1] != str(VERSION):
            raise self.error(f"unsupported {kind} version {tok[1]}")

    def keyed(self, key: str, n: Optional[int] = None) -> list[str]:
        tok = self.next()
        if not tok or tok[0] != key:
            raise self.error(f"expected '{key}' line")
        if n is not None and len(tok) != n + 1:
            raise self.error(f"'{key}' expects {n} fields, got {len(tok) - 1}")
        return tok[1:]

    def floats(self, tok, n=None) -> list[float]:
        if n is not None and len(tok) != n:
            raise self.error(f"expected {n} fields, got {len(tok)}")
        try:
            vals = [float(t) for t in tok]
        except ValueError as e:
            raise self.error(str(e)) from None
        if not all(math.isfinite(v) for v in vals):
            raise self.error("non-finite number")
        return vals

    def int(self, t) -> int:
        try:
            return int(t)
        except ValueError:
            raise self.error(f"expected integer, got {t!r}") from None


def _read(path) -> _Reader:
    return _Reader(Path(path).read_text(), source=path)


def _write(path, text: str):
    Path(path).write_text(text)


# -- intrinsics / pose / model --------------------------------------------------

def format_intrinsics(k: Intrinsics) -> str:
    return f"pose6d-intrinsics {VERSION}\n{_fmts((k.fx, k.fy, k.cx, k.cy))}\n"


def parse_intrinsics(text: str, source="<string>") -> Intrinsics:
    r = _Reader(text, source)
    r.header("intrinsics")
    vals = r.floats(r.next(), 4)
    try:
        return Intrinsics(*vals)
    except ValueError as e:
        raise r.error(str(e)) from None


def format_pose(p: Pose) -> str:
    m = p.matrix()[:3]
    return f"pose6d-pose {VERSION}\n" + "".join(_fmts(row) + "\n" for row in m)


def _parse_pose_rows(r: _Reader, rows=None) -> Pose:
    rows = rows or [r.floats(r.next(), 4) for _ in range(3)]
    try:
        m = np.array(rows)
        check_rotation(m[:, :3])
        return Pose.from_matrix(m)
    except ValueError as e:
        raise r.error(str(e)) from None


def parse_pose(text: str, source="<string>") -> Pose:
    r = _Reader(text, source)
    r.header("pose")
    return _parse_pose_rows(r)


def format_model(m: ObjectModel) -> str:
    out = [f"pose6d-model {VERSION}", f"name {m.name or '-'}",
           f"points {len(m.points)} {'parts' if m.parts is not None else 'noparts'}"]
    for i, p in enumerate(m.points):
        line = _fmts(p)
        if m.parts is not None:
            line += f" {int(m.parts[i])}"
        out.append(line)
    return "\n".join(out) + "\n"


def parse_model(text: str, source="<string>") -> ObjectModel:
    r = _Reader(text, source)
    r.header("model")
    name = r.keyed("name", 1)[0]
    n_tok = r.keyed("points", 2)
    n = r.int(n_tok[0])
    if n_tok[1] not in ("parts", "noparts"):
        raise r.error("expected 'parts' or 'noparts'")
    with_parts = n_tok[1] == "parts"
    pts, parts = [], []
    for _ in range(n):
        tok = r.next()
        pts.append(r.floats(tok[:3] if with_parts else tok, 3))
        if with_parts:
            if len(tok) != 4:
                raise r.error(f"expected 4 fields, got {len(tok)}")
            parts.append(r.int(tok[3]))
    if not r.done():
        r.next()
        raise r.error("trailing data after point list")
    try:
        return ObjectModel(np.array(pts), name="" if name == "-" else name,
                           parts=np.array(parts) if with_parts else None)
    except ValueError as e:
        raise r.error(str(e)) from None


# -- masks ----------------------------------------------------------------------

def rle_encode(mask: np.ndarray) -> str:
    """``HxW:c0,c1,...`` run lengths over the row-major pixels, starting with a
    run of zeros (possibly empty)."""
    m = np.asarray(mask, dtype=bool)
    flat = m.ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return f"{m.shape[0]}x{m.shape[1]}:" + ",".join(str(r) for r in runs)


def rle_decode(token: str) -> np.ndarray:
    shape, _, counts = token.partition(":")
    h, _, w = shape.partition("x")
    h, w = int(h), int(w)
    runs = [int(c) for c in counts.split(",")] if counts else []
    if any(r < 0 for r in runs) or sum(runs) != h * w:
        raise ValueError(f"run lengths do not cover a {h}x{w} mask")
    values = np.arange(len(runs)) % 2 == 1
    return np.repeat(values, runs).reshape(h, w)


# -- scenes -----------------------------------------------------------------------

@dataclass(eq=False)
class GTRecord:
    image_id: int
    class_id: int
    bbox: BBox
    pose: Pose
    mask: Optional[np.ndarray] = None


@dataclass(eq=False)
class Scene:
    """A rendered data set: camera, one model per class and ground-truth instances."""

    intrinsics: Intrinsics
    image_w: int
    image_h: int
    n_images: int
    models: dict = field(default_factory=dict)  # class id -> ObjectModel
    instances: list = field(default_factory=list)  # GTRecord

    def __post_init__(self):
        if self.image_w <= 0 or self.image_h <= 0 or self.n_images < 0:
            raise ValueError("image size must be positive and image count non-negative")
        for g in self.instances:
            if not 0 <= g.image_id < self.n_images:
                raise ValueError(f"instance image id {g.image_id} outside [0, {self.n_images})")
            if g.class_id not in self.models:
                raise ValueError(f"instance references class {g.class_id} without a model")


def format_gt(records: list[GTRecord]) -> str:
    out = [f"pose6d-gt {VERSION}", f"instances {len(records)}"]
    for g in records:
        rle = rle_encode(g.mask) if g.mask is not None else "-"
        out.append(f"{g.image_id} {g.class_id} {_fmts(g.bbox.as_array())} "
                   f"{_fmts(g.pose.matrix()[:3].ravel())} {rle}")
    return "\n".join(out) + "\n"


def parse_gt(text: str, source="<string>") -> list[GTRecord]:
    r = _Reader(text, source)
    r.header("gt")
    n = r.int(r.keyed("instances", 1)[0])
    out = []
    for _ in range(n):
        tok = r.next()
        if len(tok) != 19:
            raise r.error(f"gt record needs 19 fields, got {len(tok)}")
        vals = r.floats(tok[2:18])
        try:
            bbox = BBox(*vals[:4])
            m = np.array(vals[4:]).reshape(3, 4)
            check_rotation(m[:, :3])
            pose = Pose.from_matrix(m)
            mask = None if tok[18] == "-" else rle_decode(tok[18])
        except ValueError as e:
            raise r.error(str(e)) from None
        out.append(GTRecord(r.int(tok[0]), r.int(tok[1]), bbox, pose, mask))
    return out


def write_scene(scene: Scene, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "models").mkdir(exist_ok=True)
    lines = [f"pose6d-scene {VERSION}", f"image {scene.image_w} {scene.image_h}", f"images {scene.n_images}",
             f"intrinsics {_fmts((scene.intrinsics.fx, scene.intrinsics.fy, scene.intrinsics.cx, scene.intrinsics.cy))}",
             f"models {len(scene.models)}"]
    for cid in sorted(scene.models):
        rel = f"models/class_{cid}.txt"
        _write(out / rel, format_model(scene.models[cid]))
        lines.append(f"model {cid} {rel}")
    _write(out / "scene.txt", "\n".join(lines) + "\n")
    _write(out / "gt.txt", format_gt(scene.instances))


def read_scene(in_dir) -> Scene:
    d = Path(in_dir)
    path = d / "scene.txt"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found")
    r = _read(path)
    r.header("scene")
    w, h = (r.int(t) for t in r.keyed("image", 2))
    n_images = r.int(r.keyed("images", 1)[0])
    try:
        k = Intrinsics(*r.floats(r.keyed("intrinsics", 4)))
    except ValueError as e:
        raise r.error(str(e)) from None
    n = r.int(r.keyed("models", 1)[0])
    models = {}
    for _ in range(n):
        cid, rel = r.keyed("model", 2)
        mpath = d / rel
        if not mpath.exists():
            raise r.error(f"model file {rel} not found")
        models[r.int(cid)] = parse_model(mpath.read_text(), mpath)
    gt = parse_gt((d / "gt.txt").read_text(), d / "gt.txt")
    return Scene(k, w, h, n_images, models, gt)


# -- detections ---------------------------------------------------------------------

@dataclass(eq=False)
class DetectionRecord:
    image_id: int
    class_id: int
    score: float
    bbox: BBox
    code: PoseCode
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    def __eq__(self, other):
        if not isinstance(other, DetectionRecord):
            return NotImplemented
        same_mask = (self.mask is None and other.mask is None) or (
            self.mask is not None and other.mask is not None and np.array_equal(self.mask, other.mask))
        return (self.image_id, self.class_id, self.score, self.bbox) == (
            other.image_id, other.class_id, other.score, other.bbox) and self.code == other.code and same_mask


def format_detections(dets: list[DetectionRecord]) -> str:
    out = [f"pose6d-detections {VERSION}"]
    for d in dets:
        rle = rle_encode(d.mask) if d.mask is not None else "-"
        out.append(f"{d.image_id} {d.class_id} {fmt(d.score)} {_fmts(d.bbox.as_array())} "
                   f"{_fmts(d.code.as_array())} {rle}")
    return "\n".join(out) + "\n"


def parse_detections(text: str, source="<string>") -> list[DetectionRecord]:
    r = _Reader(text, source)
    r.header("detections")
    out = []
    while not r.done():
        tok = r.next()
        if len(tok) != 12:
            raise r.error(f"detection record needs 12 fields, got {len(tok)}")
        vals = r.floats(tok[2:11])
        try:
            mask = None if tok[11] == "-" else rle_decode(tok[11])
            out.append(DetectionRecord(r.int(tok[0]), r.int(tok[1]), vals[0], BBox(*vals[1:5]),
                                       PoseCode.from_array(vals[5:9]), mask))
        except ValueError as e:
            raise r.error(str(e)) from None
    return out


# -- checkpoints -------------------------------------------------------------------

def format_mlp(mlp: MLP) -> str:
    out = [f"pose6d-mlp {VERSION}", f"widths {mlp.n_inputs} " + " ".join(str(w) for w in mlp.widths)]
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        out.append(f"layer {i} {w.shape[0]} {w.shape[1]}")
        out.extend(_fmts(row) for row in w)
        out.append(_fmts(b))
    return "\n".join(out) + "\n"


def parse_mlp(text: str, source="<string>") -> MLP:
    r = _Reader(text, source)
    r.header("mlp")
    widths = [r.int(t) for t in r.keyed("widths")]
    if len(widths) != 5:
        raise r.error("expected input width plus 4 layer widths")
    ws, bs = [], []
    for i in range(4):
        idx, rows, cols = (r.int(t) for t in r.keyed("layer", 3))
        if idx != i or rows != widths[i] or cols != widths[i + 1]:
            raise r.error(f"layer header mismatch (expected layer {i} {widths[i]} {widths[i + 1]})")
        ws.append(np.array([r.floats(r.next(), cols) for _ in range(rows)]).reshape(rows, cols))
        bs.append(np.array(r.floats(r.next(), cols)))
    return MLP(tuple(ws), tuple(bs))


# -- reports -------------------------------------------------------------------------

def dump_json(obj) -> str:
    """Canonical JSON (sorted keys, shortest round-trip floats)."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("POSE6D_THREADS", "1")))
    except ValueError:
        return 1
