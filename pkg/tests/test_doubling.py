import math
import warnings

import numpy as np
import pytest
import shapely
from hypothesis import given, settings, strategies as st
from shapely.geometry import Point

from nodalab.doubling import (ChainError, DoublingError, build_net, chain_of_balls, doubling_index,
                              doubling_indices, doubling_profile, mass, masses, max_doubling)
from nodalab.fields import FunctionField, HarmonicPolynomialField, RectangleMode, ScaledField, make_extension
from nodalab.geometry import OUTSIDE, Ball, Cube, HalfPlane, Plane, PolygonDomain
from nodalab.verify import sector_case

LN2 = math.log(2)


def _const(domain):
    return FunctionField(lambda p: np.ones(p.shape[:-1]), domain=domain)


# -- masses -------------------------------------------------------------------------

@pytest.mark.parametrize("r", [0.1, 1.0, 3.0])
def test_mass_closed_forms(r):
    assert mass(_const(Plane()), Ball((0.3, -0.2), r))[0] == pytest.approx(math.pi * r**2, rel=1e-9)
    y = HarmonicPolynomialField([0.0, 0.0], [0.0, 1.0], domain=HalfPlane())
    assert mass(y, Ball((0.0, 0.0), r), HalfPlane())[0] == pytest.approx(math.pi * r**4 / 8, rel=1e-8)
    for k in (1, 2, 5):
        h = HarmonicPolynomialField.re_power(k)
        assert mass(h, Ball((0, 0), r))[0] == pytest.approx(math.pi * r ** (2 * k + 2) / (2 * k + 2), rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.2, 1.2), st.floats(-0.2, 1.2), st.floats(0.02, 0.8))
def test_mass_of_one_is_area_of_intersection(cx, cy, r):
    dom = PolygonDomain.l_shape()
    disk = Point(cx, cy).buffer(r, quad_segs=2048)
    area = shapely.area(shapely.intersection(dom.polygon, disk))
    # the inscribed polygon loses about (pi^3 / 6) r^2 / n^2 of the disk
    tol = 1e-6 + 4 * r * r * math.pi**3 / 6 / (4 * 2048) ** 2
    assert mass(_const(dom), Ball((cx, cy), r), dom)[0] == pytest.approx(area, rel=1e-5, abs=tol)


def test_batched_masses_match_single_calls():
    h = HarmonicPolynomialField([0.2, 1.0, 0.0, 0.5], [0.0, -0.3])
    C = np.array([[0.0, 0.0], [0.5, 0.1], [-1.0, 2.0]])
    R = np.array([0.3, 1.0, 0.05])
    batch = masses(h, C, R).values
    single = [mass(h, Ball(c, r))[0] for c, r in zip(C, R)]
    assert np.allclose(batch, single, rtol=1e-12)


def test_nonpositive_radius():
    with pytest.raises(DoublingError):
        masses(_const(Plane()), [[0.0, 0.0]], [0.0])


# -- doubling indices ---------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 3, 6])
def test_doubling_index_of_homogeneous_polynomials(k):
    assert doubling_index(HarmonicPolynomialField.re_power(k), (0, 0), 0.37) == pytest.approx((2 * k + 2) * LN2, abs=1e-6)


def test_doubling_profiles():
    rep = doubling_profile(HarmonicPolynomialField.re_power(3), (0, 0), 0.01, 1.0, 12)
    assert np.allclose(rep.N_values, 8 * LN2, atol=1e-6)
    mix = HarmonicPolynomialField([0.0, 1.0, 0.0, 0.0, 0.1])
    rep = doubling_profile(mix, (0, 0), 1e-3, 1.0, 16)
    assert np.all(np.diff(rep.N_values) >= -1e-9)
    assert rep.N_values[0] == pytest.approx(4 * LN2, abs=1e-4)


def test_profile_csv(tmp_path):
    rep = doubling_profile(HarmonicPolynomialField.re_power(2), (0, 0), 0.1, 1.0, 4)
    path = tmp_path / "p.csv"
    rep.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "center_x,center_y,center_t,r,H,N,err"
    assert len(lines) == 5
    assert float(lines[1].split(",")[5]) == pytest.approx(6 * LN2, abs=1e-6)


def test_profile_arguments():
    h = HarmonicPolynomialField.re_power(2)
    with pytest.raises(DoublingError):
        doubling_profile(h, (0, 0), 0.5, 0.1, 4)
    with pytest.raises(DoublingError):
        doubling_profile(h, (0, 0), 0.1, 0.5, 1)


def test_vanishing_field_has_no_doubling_index():
    zero = FunctionField(lambda p: np.zeros(p.shape[:-1]), domain=Plane())
    with pytest.raises(DoublingError):
        doubling_index(zero, (0, 0), 0.5)


def test_sector_field_doubling_is_constant_at_vertex():
    patch, h, beta = sector_case(0.2, reflex=True)
    rep = doubling_profile(h, (0, 0), 0.005, 0.1, 5, patch)
    assert np.allclose(rep.N_values, (2 * beta + 2) * LN2, atol=1e-4)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 4.0), st.floats(-0.02, 0.02), st.floats(0.0, 0.02), st.floats(0.005, 0.05))
def test_doubling_is_scale_invariant(c, x1, x2, r):
    patch, h, _ = sector_case(0.15, reflex=False)
    big = patch.scaled(c)
    s = ScaledField(h, c, domain=big)
    x = patch.boundary_point(x1)[0] + np.array([0.0, x2])
    n0 = doubling_index(h, x, r, patch)
    n1 = doubling_index(s, c * x, c * r, big)
    assert n1 == pytest.approx(n0, abs=1e-6)


def _half_disk_mass_y2(y0, r, nodes=64):
    """Integral of y^2 over {y > 0} within B((0, y0), r), on y = y0 + r sin(phi)."""
    g, w = np.polynomial.legendre.leggauss(nodes)
    lo = np.arcsin(np.clip(-y0 / r, -1.0, 1.0))
    hi = np.full_like(lo, np.pi / 2)
    phi = 0.5 * (hi - lo)[:, None] * (g + 1) + lo[:, None]
    y = y0[:, None] + r[:, None] * np.sin(phi)
    f = y**2 * 2 * r[:, None] ** 2 * np.cos(phi) ** 2
    return 0.5 * (hi - lo) * (f @ w)


def test_max_doubling_of_linear_field_on_half_plane():
    y = HarmonicPolynomialField([0.0, 0.0], [0.0, 1.0], domain=HalfPlane())
    Q = Cube((0.0, 0.0), 0.1)
    res = max_doubling(y, Q, HalfPlane())
    # brute force over centres in Q (x does not matter) and r in [l/2, l]
    rng = np.random.default_rng(0)
    ell = Q.diam
    y0 = rng.uniform(0.0, 0.05, 100_000)
    r = rng.uniform(ell / 2, ell, 100_000)
    y0[:100] = 0.0
    oracle = np.log(_half_disk_mass_y2(y0, 2 * r) / _half_disk_mass_y2(y0, r)).max()
    assert oracle == pytest.approx(math.log(16), rel=1e-9)
    assert res.value == pytest.approx(oracle, rel=0.02)
    assert Q.contains(res.center[None], 1e-12)[0]


def test_max_doubling_rejects_cube_off_domain():
    from nodalab.geometry import GeometryError

    with pytest.raises(GeometryError):
        max_doubling(HarmonicPolynomialField.re_power(1), Cube((0.0, -1.0), 0.1), HalfPlane())


# -- harmonic extensions ------------------------------------------------------------

def test_extension_doubling_independent_of_height():
    u = RectangleMode(2, 3)
    h = make_extension(u, u.lam)
    vals = [doubling_index(h, (0.3, 0.6, t), 0.08) for t in (-0.5, 0.0, 0.2, 1.0)]
    assert np.ptp(vals) < 1e-6


@pytest.mark.parametrize("config", range(10))
def test_extension_mass_against_monte_carlo(config):
    rng = np.random.default_rng(100 + config)
    m, n = rng.integers(1, 4, 2)
    u = RectangleMode(int(m), int(n))
    h = make_extension(u, u.lam)
    c = np.array([*rng.uniform(0.2, 0.8, 2), rng.uniform(-0.3, 0.3)])
    r = rng.uniform(0.05, 0.3)
    H = mass(h, Ball(c, r))[0]
    # uniform samples of the 3D ball, restricted to the square cylinder
    N = 10_000_000 if config < 2 else 1_000_000
    d = rng.normal(size=(N, 3))
    p = c + r * d / np.linalg.norm(d, axis=1)[:, None] * rng.random(N)[:, None] ** (1 / 3)
    inside = np.all((p[:, :2] > 0) & (p[:, :2] < 1), axis=1)
    vals = np.where(inside, h.eval(p) ** 2, 0.0)
    vol = 4 / 3 * math.pi * r**3
    est, se = vol * vals.mean(), vol * vals.std() / math.sqrt(N)
    assert abs(H - est) <= 3 * se


# -- chains of balls ----------------------------------------------------------------

def test_net_covers_domain(lshape):
    net = build_net(lshape, 0.05, seed=3)
    pts = np.random.default_rng(0).uniform(0, 1, (20_000, 2))
    pts = pts[lshape.classify(pts) != OUTSIDE]
    from scipy.spatial import cKDTree

    d, _ = cKDTree(net).query(pts)
    assert d.max() < 0.05
    pair, _ = cKDTree(net).query(net, k=2)
    assert pair[:, 1].min() > 0.05 - 1.25 * 0.05 / 3 - 1e-12


def test_chain_degenerate_when_start_is_maximizer(square):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = chain_of_balls(square, (0.5, 0.5), 0.02, maximizer=(0.5, 0.5))
    assert rep.steps == 1 and len(rep.balls) == 2


@pytest.mark.filterwarnings("ignore:r is not below r0/16")
@pytest.mark.parametrize("name,start,target", [("square", (0.1, 0.1), (0.9, 0.8)),
                                               ("lshape", (0.1, 0.9), (0.9, 0.1))])
def test_chain_invariants(name, start, target, square, lshape):
    dom = square if name == "square" else lshape
    r = 0.05
    rep = chain_of_balls(dom, start, r, maximizer=target, seed=1)
    inv = rep.invariants(r)
    assert inv["step_below_quarter"] and inv["nested"] and inv["count_bound"]
    assert np.allclose(rep.centers[0], start) and np.allclose(rep.centers[-1], target)
    assert np.all(dom.classify(rep.centers) != OUTSIDE)
    if name == "lshape":
        # the chain has to go round the re-entrant corner
        assert np.any(np.all(rep.centers <= 0.55, axis=1))


def test_chain_to_field_maximum(square):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = chain_of_balls(square, (0.1, 0.1), 0.05, field=RectangleMode(1, 1))
    assert np.allclose(rep.maximizer, [0.5, 0.5], atol=0.05 / 8)


def test_chain_errors(square):
    with pytest.raises(ChainError):
        chain_of_balls(square, (2.0, 2.0), 0.02, maximizer=(0.5, 0.5))
    with pytest.raises(ChainError):
        chain_of_balls(square, (0.2, 0.2), 0.02)
