import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qcilab.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TORUS = """schema_version: 1
name: {name}
target: pointwise_diag
system: {{kind: torus, dim: 2}}
cbar: [0.6, 0.8]
lambdas: [10, 20, 40, 80]
points: {{kind: random, count: 2}}
"""


def _write(tmp_path, name, text):
    p = tmp_path / f"{name}.cfg"
    p.write_text(text, encoding="utf-8")
    return p


def test_spectrum_sphere(tmp_path, capsys):
    assert main(["spectrum", str(CONFIGS / "sphere.cfg"), "-o", str(tmp_path)]) == 0
    path = tmp_path / "sphere_spectrum.csv"
    assert capsys.readouterr().out.strip() == str(path)
    rows = [ln for ln in path.read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    assert len(rows) == 1 + 25
    assert (tmp_path / "sphere.log").exists()


def test_geometry_bump_flags_one_meridian(tmp_path):
    assert main(["geometry", str(CONFIGS / "bump.cfg"), "-o", str(tmp_path)]) == 0
    head = (tmp_path / "bump_geometry.csv").read_text(encoding="utf-8").splitlines()
    line = next(ln for ln in head if ln.startswith("# critical_meridians:"))
    values = [float(v) for v in line.split(":")[1].replace(",", " ").split()]
    assert len(values) == 1 and values[0] == pytest.approx(np.pi / 2, abs=1e-9)


def test_verify_and_report(tmp_path, capsys):
    cfg = _write(tmp_path, "tor", TORUS.format(name="tor"))
    out = tmp_path / "a" / "b"  # created on demand
    assert main(["verify", str(cfg), "-o", str(out)]) == 0
    assert capsys.readouterr().out.startswith("PASS tor:")
    rep = json.loads((out / "tor.report").read_text(encoding="utf-8"))
    assert rep["passed"] and rep["target"] == "pointwise_diag"
    summary = tmp_path / "summary.csv"
    assert main(["report", str(out / "tor.report"), "-o", str(summary)]) == 0
    rows = list(csv.DictReader(summary.open(encoding="utf-8")))
    assert rows[0]["experiment"] == "tor" and rows[0]["passed"] == "True"


def test_verify_below_threshold_exits_2(tmp_path):
    cfg = _write(tmp_path, "strict", TORUS.format(name="strict") + "threshold: -5.0\n")
    assert main(["verify", str(cfg), "-o", str(tmp_path)]) == 2
    assert not json.loads((tmp_path / "strict.report").read_text(encoding="utf-8"))["passed"]


def test_verify_is_deterministic(tmp_path):
    cfg = _write(tmp_path, "det", TORUS.format(name="det"))
    assert main(["verify", str(cfg), "-o", str(tmp_path / "1")]) == 0
    assert main(["verify", str(cfg), "-o", str(tmp_path / "2")]) == 0
    assert (tmp_path / "1" / "det.csv").read_bytes() == (tmp_path / "2" / "det.csv").read_bytes()


def test_errors_exit_1(tmp_path, capsys):
    bad = _write(tmp_path, "bad", TORUS.format(name="bad") + "colour: red\n")
    assert main(["verify", str(bad), "-o", str(tmp_path)]) == 1
    assert "unknown key 'colour'" in capsys.readouterr().err
    assert main(["verify", str(tmp_path / "nope.cfg")]) == 1
    blocker = tmp_path / "file"
    blocker.write_text("x")
    good = _write(tmp_path, "good", TORUS.format(name="good"))
    assert main(["verify", str(good), "-o", str(blocker / "sub")]) == 1
    assert main(["report", str(tmp_path / "missing.report")]) == 1


def test_usage_errors_exit_1():
    for argv in (["frobnicate"], [], ["verify"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1


def test_console_script_exit_codes(tmp_path):
    cfg = _write(tmp_path, "cs", TORUS.format(name="cs"))
    ok = subprocess.run([sys.executable, "-m", "qcilab.cli", "verify", str(cfg), "-o", str(tmp_path)],
                        capture_output=True, text=True)
    assert ok.returncode == 0, ok.stderr
    bad = subprocess.run([sys.executable, "-m", "qcilab.cli", "unknown"], capture_output=True, text=True)
    assert bad.returncode == 1
