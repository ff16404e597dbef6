import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nodalab.fields import DiskMode, FEMField, HarmonicPolynomialField, IntervalMode, RectangleMode, make_extension
from nodalab.geometry import Ball, Cube, Plane, PolygonDomain
from nodalab.meshing import triangulate
from nodalab.nodal import (NodalError, NodalSet, count_zeros_1d, extract_nodal, marching_triangles,
                           measure_in_ball, measure_in_cube, zeros_1d)

PLANE_WINDOW = (-1.0, -1.0, 1.0, 1.0)


def test_ground_state_has_no_interior_zeros(square):
    assert extract_nodal(RectangleMode(1, 1), square, 0.01).total_length == pytest.approx(0.0, abs=1e-12)


def test_rectangle_mode_length(square):
    ns = extract_nodal(RectangleMode(3, 2), square, 0.01)
    assert ns.total_length == pytest.approx(3.0, rel=0.02)


def test_nodal_length_symmetric_in_mode_indices(square):
    a = extract_nodal(RectangleMode(4, 2), square, 0.02).total_length
    b = extract_nodal(RectangleMode(2, 4), square, 0.02).total_length
    assert a == pytest.approx(b, rel=1e-9)


@pytest.mark.parametrize("window", [None, (-1, -1, 1, 1)], ids=["meshed", "grid"])
def test_resolution_halving_changes_length_little(window):
    u = DiskMode(2, 2)
    disk = PolygonDomain.regular_polygon(256)
    coarse = extract_nodal(u, disk, 0.02, window=window).total_length
    fine = extract_nodal(u, disk, 0.01, window=window).total_length
    # two diameters plus the circle of radius j_{2,1} / j_{2,2}
    exact = 4.0 + 2 * math.pi * DiskMode(2, 1).zero / u.zero
    assert abs(fine - coarse) / fine < 0.01
    assert fine == pytest.approx(exact, rel=0.01)


def test_chord_through_ball():
    ns = extract_nodal(RectangleMode(2, 1), PolygonDomain.rectangle(), 0.01)
    assert measure_in_ball(ns, Ball((0.5, 0.5), 0.25)) == pytest.approx(0.5, rel=1e-9)
    # off-centre ball: chord of length 2 sqrt(r^2 - d^2)
    assert measure_in_ball(ns, Ball((0.4, 0.5), 0.2)) == pytest.approx(2 * math.sqrt(0.03), rel=1e-9)
    assert measure_in_ball(ns, Ball((0.1, 0.5), 0.2)) == 0.0


def test_harmonic_zero_set_in_unit_ball():
    ns = extract_nodal(HarmonicPolynomialField.re_power(2), Plane(), 0.01, window=PLANE_WINDOW)
    assert measure_in_ball(ns, Ball((0, 0), 1.0)) == pytest.approx(4.0, rel=1e-6)


def test_empty_zero_set_measures_zero():
    ns = NodalSet(np.zeros((0, 2, 2)), 0.01)
    assert measure_in_ball(ns, Ball((0, 0), 1.0)) == 0.0
    assert measure_in_cube(ns, Cube((0, 0), 1.0)) == 0.0
    assert ns.total_length == 0.0


def test_measure_in_cube(square):
    ns = extract_nodal(RectangleMode(2, 1), square, 0.01)
    assert measure_in_cube(ns, Cube((0.5, 0.5), 0.4)) == pytest.approx(0.4, rel=1e-9)
    assert measure_in_cube(ns, Cube((0.5, 0.5), 0.4, math.pi / 4)) == pytest.approx(0.4 * math.sqrt(2), rel=1e-9)
    assert measure_in_cube(ns, Cube((0.1, 0.5), 0.1)) == 0.0


def test_cylinder_area_in_three_ball():
    u = RectangleMode(2, 1)
    ns = extract_nodal(make_extension(u, u.lam), resolution=0.01)
    assert ns.cylinder
    assert measure_in_ball(ns, Ball((0.5, 0.5, 0.3), 0.2)) == pytest.approx(math.pi * 0.04, rel=1e-9)
    assert measure_in_ball(ns, Ball((0.4, 0.5, 0.0), 0.2)) == pytest.approx(math.pi * 0.03, rel=1e-9)
    with pytest.raises(NodalError):
        measure_in_ball(ns, Ball((0.5, 0.5), 0.2))


def test_interval_extension_gives_vertical_lines():
    u = IntervalMode(3)
    ns = extract_nodal(make_extension(u, u.lam), window=(0, -0.5, 1, 0.5))
    xs = np.sort(ns.segments[:, 0, 0])
    assert np.allclose(xs, [1 / 3, 2 / 3], atol=1e-12)
    assert ns.total_length == pytest.approx(2.0)


def test_fem_nodal_set(lshape):
    mesh = triangulate(lshape, 0.05)
    x, y = mesh.vertices.T
    ns = extract_nodal(FEMField(mesh, x - 0.25))
    # the line x = 1/4 crosses the L-shape over its full height
    assert ns.total_length == pytest.approx(1.0, rel=1e-9)


def test_marching_on_single_triangle():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    seg = marching_triangles(verts, np.array([[0, 1, 2]]), np.array([-1.0, 1.0, 1.0]),
                             np.zeros(3, dtype=bool), 1.0)
    assert len(seg) == 1
    assert np.linalg.norm(seg[0, 1] - seg[0, 0]) == pytest.approx(math.sqrt(0.5))


def test_resolution_too_coarse(square):
    with pytest.raises(NodalError):
        extract_nodal(RectangleMode(2, 2), square, 0.5)
    with pytest.raises(NodalError):
        extract_nodal(HarmonicPolynomialField.re_power(2), Plane(), 0.01)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.01, 0.4), st.floats(0.01, 0.4))
def test_measure_monotone_in_radius(cx, cy, r1, r2):
    ns = _grid_mode_set()
    lo, hi = sorted((r1, r2))
    assert measure_in_ball(ns, Ball((cx, cy), lo)) <= measure_in_ball(ns, Ball((cx, cy), hi)) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.0, 1.0))
def test_measure_additive_over_split_segments(cut, frac):
    ns = _grid_mode_set()
    # splitting every segment at an interior point leaves all measures unchanged
    mid = ns.segments[:, 0] + frac * (ns.segments[:, 1] - ns.segments[:, 0])
    split = NodalSet(np.concatenate([np.stack([ns.segments[:, 0], mid], axis=1),
                                     np.stack([mid, ns.segments[:, 1]], axis=1)]), ns.resolution)
    ball = Ball((cut, 0.5), 0.3)
    assert measure_in_ball(split, ball) == pytest.approx(measure_in_ball(ns, ball), abs=1e-12)
    assert split.total_length == pytest.approx(ns.total_length, abs=1e-12)


_CACHE = {}


def _grid_mode_set():
    if "ns" not in _CACHE:
        _CACHE["ns"] = extract_nodal(RectangleMode(3, 4), PolygonDomain.rectangle(), 0.01)
    return _CACHE["ns"]


def test_count_zeros_1d():
    assert count_zeros_1d(IntervalMode(5), 0, 1) == 4
    assert count_zeros_1d(IntervalMode(1), 0, 1) == 0
    assert count_zeros_1d(IntervalMode(3), 0, 0.5) == 1
    assert np.allclose(zeros_1d(IntervalMode(4), 0, 1), [0.25, 0.5, 0.75], atol=1e-12)


def test_svg_export(square):
    svg = extract_nodal(RectangleMode(2, 2), square, 0.05).to_svg(square.outer)
    assert svg.startswith("<svg") and svg.count("<line") > 0 and "<polygon" in svg
