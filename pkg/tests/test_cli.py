import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nodalab.cli import SpecError, main, parse_field, parse_harmonic
from nodalab.fields import DiskMode, ExtensionField, HarmonicPolynomialField, RectangleMode

DATA = Path(__file__).resolve().parents[1] / "demos" / "data"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- SPEC parsing ------------------------------------------------------------------

@pytest.mark.parametrize("expr,point,value", [
    ("Re(z^2)", (0.3, 0.4), 0.09 - 0.16),
    ("2*Im(z^2) - x + 0.5", (1.0, 2.0), 8.0 - 1.0 + 0.5),
    ("y", (0.2, -0.7), -0.7),
    ("Re((z-0.5)^3)", (1.0, 0.0), 0.125),
    ("Im((z+1)^2) + x", (0.0, 1.0), 2.0),
    ("-Re(z) - -y", (1.0, 2.0), 1.0),
    ("1e-3*Re(z^4)", (2.0, 0.0), 0.016),
])
def test_parse_harmonic(expr, point, value):
    h = parse_harmonic(expr)
    assert h.eval(np.array([point]))[0] == pytest.approx(value, abs=1e-12)


@pytest.mark.parametrize("expr", ["", "Re(z^2) Im(z)", "Re(w^2)", "Re((z-1)^2)+Im((z-2)^2)",
                                  "Re((z-1)^2)+Re(z^3)", "sin(x)"])
def test_parse_harmonic_errors(expr):
    with pytest.raises(SpecError):
        parse_harmonic(expr)


coeffs = st.lists(st.floats(-10, 10, allow_nan=False).map(lambda v: round(v, 6)), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(coeffs, coeffs, st.sampled_from([0.0, 0.25, -1.5]))
def test_spec_round_trip(a, b, c):
    h = HarmonicPolynomialField(a, b, center=c)
    back = parse_harmonic(h.spec())
    pts = np.random.default_rng(0).uniform(-2, 2, (16, 2))
    assert np.allclose(back.eval(pts), h.eval(pts), rtol=1e-12, atol=1e-9 * (1 + h.scale))


def test_parse_field_kinds():
    assert isinstance(parse_field("rect:3,2"), RectangleMode)
    r = parse_field("rect:1,2,2.0,0.5")
    assert (r.a, r.b) == (2.0, 0.5)
    assert isinstance(parse_field("disk:0,2"), DiskMode)
    assert parse_field("interval:3").m == 3
    ext = parse_field("ext:rect:2,1")
    assert isinstance(ext, ExtensionField) and ext.lam == pytest.approx(5 * math.pi**2)
    assert parse_field("ext:interval:2@10").lam == 10.0
    assert isinstance(parse_field("harmonic:Re(z^2)"), HarmonicPolynomialField)


@pytest.mark.parametrize("spec", ["rect", "rect:1", "rect:1,2,3", "rect:a,b", "disk:1",
                                  "fourier:1", "ext:harmonic:y", "fem:nofile.json", "rect:0,1"])
def test_parse_field_errors(spec):
    with pytest.raises((SpecError, ValueError)):
        parse_field(spec)


# -- commands -----------------------------------------------------------------------

def test_doubling_command(tmp_path, capsys):
    code = main(["doubling", "--field", "harmonic:Re(z^2)", "--center", "0,0", "--rmin", "0.1",
                 "--rmax", "1", "--steps", "8", "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "doubling.csv")
    assert len(rows) == 8
    assert all(abs(float(r["N"]) - 6 * math.log(2)) < 1e-6 for r in rows)
    assert "N=" in capsys.readouterr().out


def test_mesh_solve_nodal_pipeline(tmp_path):
    assert main(["mesh", "--domain", "square", "--h", "0.05", "--out", str(tmp_path)]) == 0
    mesh = tmp_path / "mesh.json"
    assert main(["solve", "--mesh", str(mesh), "--count", "3", "--out", str(tmp_path)]) == 0
    lams = [float(r["lambda"]) for r in _rows(tmp_path / "solution_eigenvalues.csv")]
    assert lams[0] == pytest.approx(2 * math.pi**2, rel=0.01)
    assert main(["nodal", "--solution", str(tmp_path / "solution.json"), "--index", "2",
                 "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "nodal.json").read_text())
    # second eigenfunction of the square: one nodal line of length about 1
    assert 0.95 < data["length"] < 1.5
    assert (tmp_path / "nodal.svg").read_text().startswith("<svg")


def test_nodal_from_field(tmp_path):
    assert main(["nodal", "--field", "rect:3,1", "--domain", "square", "--resolution", "0.01",
                 "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "nodal.json").read_text())["length"] == pytest.approx(2.0, rel=0.01)


def test_verify_yau(tmp_path):
    assert main(["verify", "yau", "--domain", "square", "--count", "36", "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "yau.csv")) == 36
    summary = json.loads((tmp_path / "yau_summary.json").read_text())
    assert summary["passed"] and summary["runtime_ms"] is None


@pytest.mark.filterwarnings("ignore:tau = ")
def test_construct_command(tmp_path):
    code = main(["construct", "--patch", str(DATA / "patch.json"), "--cube", "0,0,0.02",
                 "--k", "3", "--out", str(tmp_path)])
    assert code == 0
    data = json.loads((tmp_path / "construction.json").read_text())
    assert data["k"] == 3 and len(data["boundary_cubes"]) >= 3
    assert data["uncovered_fraction"] < 1e-9


def test_chain_command(tmp_path, capsys):
    code = main(["chain", "--domain", "lshape", "--start", "0.1,0.9", "--r", "0.05",
                 "--field", "rect:1,1", "--out", str(tmp_path)])
    assert code == 0
    data = json.loads((tmp_path / "chain.json").read_text())
    assert data["invariants"]["nested"] and data["steps"] >= 1
    assert "r0/16" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert main(["solve", "--mesh", str(tmp_path / "missing.json"), "--count", "2"]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        main(["mesh", "--domain", "square", "--h", "0.1", "--bogus"])
    assert info.value.code == 2
    assert main(["doubling", "--field", "rect:1", "--center", "0,0", "--rmin", "0.1",
                 "--rmax", "1", "--steps", "3", "--out", str(tmp_path)]) == 2
    assert main(["verify", "unknown-check", "--out", str(tmp_path)]) == 2
    assert main(["chain", "--domain", "square", "--start", "0.5,0.5", "--r", "0.05"]) == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "nodalab", "doubling", "--field", "harmonic:y",
                          "--center", "0,0", "--rmin", "0.1", "--rmax", "0.2", "--steps", "2",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert len(_rows(tmp_path / "doubling.csv")) == 2
