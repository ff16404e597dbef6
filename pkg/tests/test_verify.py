import json
import math

import numpy as np
import pytest
from scipy import integrate

from nodalab.doubling import doubling_index, doubling_profile
from nodalab.fields import HarmonicPolynomialField, IntervalMode, RectangleMode, make_extension, sup_on_ball
from nodalab.geometry import Ball, Cube, HalfPlane, LipschitzPatch, PolygonDomain
from nodalab.verify import (CHECK_NAMES, CheckReport, VerifyError, cauchy_family_member,
                            check_almost_monotonicity, check_boundary_nodal_bound, check_cauchy,
                            check_corollary_shift, check_interior_monotonicity,
                            check_interior_nodal_bound, check_subharmonic, default_check,
                            fit_through_origin, interior_nodal_ratio_closed_form,
                            random_harmonic_polynomials, rectangle_grid_modes,
                            run_hyperplane_experiment, vanishing_polynomials, write_artifacts, yau_sweep)

LN2 = math.log(2)
Y = HarmonicPolynomialField([0.0, 0.0], [0.0, 1.0])


@pytest.fixture(scope="module")
def flat():
    return LipschitzPatch.flat(radius=1.0, tau=0.01)


# -- doubling inequalities ----------------------------------------------------------

def test_linear_field_is_exactly_monotone(flat):
    rep = check_almost_monotonicity(flat, [Y], n_centers=1)
    assert rep.extras["max_eps_hat"] == pytest.approx(0.0, abs=1e-6)
    assert all(row["N_r"] == pytest.approx(math.log(16), abs=1e-6) for row in rep.rows)


def test_xy_is_exactly_monotone_at_the_boundary(flat):
    rep = check_almost_monotonicity(flat, [HarmonicPolynomialField.im_power(2)], n_centers=1)
    assert rep.passed
    assert all(row["N_r"] == pytest.approx(6 * LN2, abs=1e-6) for row in rep.rows)


def test_mixed_profile_increases_between_limits(flat):
    h = HarmonicPolynomialField([0.0, 0.0, 0.0], [0.0, 1.0, 1.0])
    rep = doubling_profile(h, (0, 0), 1e-4, 10.0, 64, flat.scaled(100))
    # H = pi r^4 / 8 + pi r^6 / 12, so N runs from ln 16 up to ln 64
    assert np.all(np.diff(rep.N_values) > 0)
    r = rep.radii
    H = lambda s: math.pi * s**4 / 8 + math.pi * s**6 / 12
    assert np.allclose(rep.N_values, np.log(H(2 * r) / H(r)), atol=1e-6)
    assert rep.N_values[0] == pytest.approx(math.log(16), abs=1e-3)
    assert rep.N_values[-1] == pytest.approx(math.log(64), abs=0.05)


def test_interior_monotonicity_on_small_corpus():
    rep = check_interior_monotonicity(random_harmonic_polynomials(5, seed=4), n_pairs=5, seed=4)
    assert rep.cases == 25 and rep.passed and rep.worst_margin >= -1e-6


def test_corollary_shift_respects_inclusion_bound(flat):
    rep = check_corollary_shift(flat, vanishing_polynomials(10, seed=2), n_pairs=2, seed=2)
    assert rep.passed
    for row in rep.rows:
        # ball inclusions give N(x1, r/2) <= N(x2, r/4) + N(x2, r/2) + N(x2, r) exactly
        assert row["lhs"] <= row["inclusion_bound"] + row["err"] + 1e-9
        assert math.hypot(row["x1"] - row["x2"], row["y1"] - row["y2"]) < row["r"] / 4


def test_three_ball_boundary_example():
    hp = HalfPlane()
    r = 0.1
    s = [sup_on_ball(Y, Ball((0.0, 0.0), f * r), hp).value for f in (1.5, 1.0, 4.0)]
    assert s == pytest.approx([1.5 * r, r, 4 * r], rel=1e-9)
    rhs = 9 * s[1] ** (1 / 3) * s[2] ** (2 / 3)
    assert rhs == pytest.approx(9 * 4 ** (2 / 3) * r, rel=1e-9)
    assert rhs / r == pytest.approx(22.68, abs=0.01)


def test_subharmonic_small_corpus(flat):
    rep = check_subharmonic(flat, vanishing_polynomials(8, seed=5), seed=5)
    assert rep.passed and rep.worst_margin > 0


def test_empty_corpus_is_rejected():
    with pytest.raises(VerifyError):
        check_interior_monotonicity([])


# -- Cauchy uniqueness --------------------------------------------------------------

@pytest.mark.parametrize("eps", [1e-6, 1e-3, 0.1])
def test_cauchy_family_normalization(eps):
    h = cauchy_family_member(eps)
    x = np.linspace(-1, 1, 201)
    gamma = np.column_stack([x, np.zeros_like(x)])
    assert np.abs(h.eval(gamma)).max() == 0.0
    assert np.abs(h.grad(gamma)[:, 1]).max() <= eps * (1 + 1e-12)
    th = np.linspace(0, np.pi, 201)
    rim = np.column_stack([np.cos(th), np.sin(th)])
    assert np.abs(h.eval(rim)).max() <= 1 + 1e-12


def test_cauchy_fit_on_short_sweep():
    rep = check_cauchy(np.geomspace(1e-5, 1e-1, 5), n_samples=1000)
    assert rep.extras["gamma_hat"] > 0.05
    assert rep.extras["slope_y"] == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(VerifyError):
        check_cauchy([1e-3, 1e-2])


# -- hyperplane dichotomy -----------------------------------------------------------

@pytest.mark.parametrize("field", [Y, HarmonicPolynomialField.im_power(3)], ids=["y", "im_z3"])
def test_hyperplane_dichotomy_examples(field):
    patch = LipschitzPatch.flat(radius=2.0, tau=0.01)
    rep = run_hyperplane_experiment(patch, field, Cube((0.0, 0.0), 0.04))
    assert rep.zero_free
    assert rep.dichotomy in ("halved", "zero_free")
    assert rep.N2_Q >= rep.N_star_Q - 1e-12


# -- nodal bounds -------------------------------------------------------------------

def test_interior_nodal_closed_forms():
    assert interior_nodal_ratio_closed_form(1) == pytest.approx(2 / (4 * LN2 + 1))
    assert interior_nodal_ratio_closed_form(1) == pytest.approx(0.5301, abs=1e-4)
    assert interior_nodal_ratio_closed_form(3) == pytest.approx(0.9167, abs=1e-4)
    rep = check_interior_nodal_bound(fields=[], bound=5.0)
    assert rep.cases == 6
    assert rep.extras["closed_form_max_rel_dev"] <= 0.02


def test_boundary_nodal_examples():
    m = 3
    h = make_extension(IntervalMode(m), (m * math.pi) ** 2)
    small, large = 0.5 / m, 1.5 / m
    rep = check_boundary_nodal_bound([(h, (0.0, 0.0), small), (h, (0.0, 0.0), large)])
    assert rep.rows[0]["length"] == 0.0 and rep.rows[0]["ratio"] == 0.0
    # the line x = 1/m cuts a chord from the ball at the wall
    chord = 2 * math.sqrt(large**2 - (1 / m) ** 2)
    assert rep.rows[1]["length"] == pytest.approx(chord, rel=1e-9)
    assert rep.passed


def test_boundary_nodal_skips_corner_balls():
    u = RectangleMode(2, 1)
    h = make_extension(u, u.lam)
    rep = check_boundary_nodal_bound([(h, (0.0, 0.05, 0.0), 0.2)])
    assert rep.extras["skipped"] == 1 and rep.cases == 0
    assert rep.rows[0]["note"].startswith("skipped")


@pytest.mark.parametrize("r", [0.2, 0.4])
def test_interval_extension_doubling_against_direct_quadrature(r):
    u = IntervalMode(1)
    h = make_extension(u, math.pi**2)

    def H(rad):
        # integrate over the strip part of B((1/2, 0), rad)
        lo, hi = max(0.0, 0.5 - rad), min(1.0, 0.5 + rad)
        half = lambda x: math.sqrt(max(rad * rad - (x - 0.5) ** 2, 0.0))
        val, _ = integrate.dblquad(lambda t, x: (math.sin(math.pi * x) * math.exp(math.pi * t)) ** 2,
                                   lo, hi, lambda x: -half(x), half, epsabs=1e-13, epsrel=1e-11)
        return val

    assert doubling_index(h, (0.5, 0.0), r) == pytest.approx(math.log(H(2 * r) / H(r)), abs=1e-4)


def test_fit_through_origin():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert fit_through_origin(x, 2 * x) == pytest.approx((2.0, 1.0))
    y = np.array([1.1, 1.9, 3.2, 3.9])
    C, r2 = fit_through_origin(x, y)
    assert C == pytest.approx(np.linalg.lstsq(x[:, None], y, rcond=None)[0][0])
    assert 0.99 < r2 < 1.0


# -- Yau sweep ----------------------------------------------------------------------

def test_yau_sweep_rectangle():
    rep = yau_sweep(count=10)
    assert rep.cases == 10 and rep.extras["source"] == "analytic"
    for row in rep.rows:
        assert row["length"] == pytest.approx(row["exact_length"], rel=0.01, abs=1e-9)
    assert rep.rows[0]["length"] == pytest.approx(0.0, abs=1e-12)
    rm = [row["running_max"] for row in rep.rows]
    assert rm == sorted(rm)


def test_yau_grid_modes():
    modes = rectangle_grid_modes(3)
    assert len(modes) == 9
    assert modes[0] == (1, 1, pytest.approx(2 * math.pi**2))
    assert [lam for _, _, lam in modes] == sorted(lam for _, _, lam in modes)


def test_yau_arguments():
    with pytest.raises(VerifyError):
        yau_sweep(count=3)
    with pytest.raises(VerifyError):
        yau_sweep(source="spectral")
    with pytest.raises(VerifyError):
        yau_sweep(PolygonDomain.l_shape(), source="analytic")


# -- reports ------------------------------------------------------------------------

def test_artifacts_are_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        rep = yau_sweep(count=6)
        paths = write_artifacts(rep, tmp_path / name)
        outs.append([open(p, "rb").read() for p in paths])
    assert outs[0] == outs[1]
    summary = json.loads(outs[0][-1])
    assert summary["check_id"] == "yau" and summary["runtime_ms"] is None
    assert summary["artifacts"] == ["yau.csv", "yau.svg", "yau_summary.json"]


def test_summary_replaces_non_finite_values(tmp_path):
    rep = CheckReport("demo", 1, 0, math.inf, rows=[{"case": 0, "value": 1.5}])
    paths = write_artifacts(rep, tmp_path)
    summary = json.loads(open(paths[-1]).read())
    assert summary["worst_margin"] is None and summary["passed"]
    assert open(paths[0]).read().splitlines() == ["case,value", "0,1.5"]


def test_timing_is_opt_in():
    assert check_interior_monotonicity(random_harmonic_polynomials(2), n_pairs=2).runtime_ms is None
    assert check_interior_monotonicity(random_harmonic_polynomials(2), n_pairs=2, timing=True).runtime_ms > 0


def test_registry():
    assert len(CHECK_NAMES) == 12 and len(set(CHECK_NAMES)) == 12
    with pytest.raises(VerifyError):
        default_check("nonexistent")
