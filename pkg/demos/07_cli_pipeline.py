"""
Scene -> detections -> report, through the command line
========================================================

Equivalent shell session:

    pose6d synthesize --spec spec.json --out scene
    pose6d perturb --gt scene --out det.txt --rot-deg 3 --trans-cm 3
    pose6d evaluate --gt scene --det det.txt --report report.json
"""

import json
import tempfile
from pathlib import Path

from pose6d.cli import main

with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    (d / "spec.json").write_text(json.dumps({"seed": 1, "images": 10, "objects_per_image": 3}))
    main(["synthesize", "--spec", str(d / "spec.json"), "--out", str(d / "scene")])
    print((d / "scene" / "scene.txt").read_text())

    for rot, trans in [(3, 3), (10, 3)]:
        print(f"--- detections offset by {rot} deg / {trans} cm")
        main(["perturb", "--gt", str(d / "scene"), "--out", str(d / "det.txt"),
              "--rot-deg", str(rot), "--trans-cm", str(trans)])
        main(["evaluate", "--gt", str(d / "scene"), "--det", str(d / "det.txt")])
