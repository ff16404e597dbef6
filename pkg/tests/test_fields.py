import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nodalab.fields import (DiskMode, ExtensionField, FEMField, FieldError, FunctionField,
                            HarmonicPolynomialField, IntervalMode, RectangleMode, ScaledField,
                            holder_boundary_check, make_extension, sup_on_ball)
from nodalab.geometry import Ball, HalfPlane, LipschitzPatch, Plane, PolygonDomain
from nodalab.meshing import triangulate
from nodalab.verify import random_harmonic_polynomials

# sixth-order central second difference, exact for polynomials of degree <= 7
D2 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
OFFSETS = np.arange(-3, 4)


def stencil_laplacian(field, p, h):
    total = 0.0
    for axis in range(len(p)):
        e = np.zeros(len(p))
        e[axis] = h
        total += sum(w * field.eval((p + k * e)[None])[0] for w, k in zip(D2, OFFSETS)) / h**2
    return total


def fd_grad(field, pts, step):
    out = np.zeros(pts.shape)
    for axis in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[axis] = step
        out[:, axis] = (field.eval(pts + e) - field.eval(pts - e)) / (2 * step)
    return out


# -- harmonic polynomials -----------------------------------------------------------

def test_harmonic_polynomial_matches_complex_powers(rng):
    h = HarmonicPolynomialField([0.5, 1.0, 0.0, -2.0], [0.0, 0.3, 1.5], center=0.25)
    p = rng.uniform(-1, 1, (20, 2))
    z = p[:, 0] + 1j * p[:, 1] - 0.25
    expected = 0.5 + (1.0 * z).real + (0.3 * z).imag + (1.5 * z**2).imag - 2.0 * (z**3).real
    assert np.allclose(h.eval(p), expected, atol=1e-14)
    assert h.degree == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_harmonic_polynomials_are_harmonic(seed):
    h = random_harmonic_polynomials(1, seed)[0]
    p = np.random.default_rng(seed).uniform(-1, 1, 2)
    assert abs(stencil_laplacian(h, p, 0.05)) <= 1e-8 * h.scale
    assert np.all(h.laplacian(p[None]) == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mean_value_property(seed):
    rng = np.random.default_rng(seed)
    h = random_harmonic_polynomials(1, seed)[0]
    c = rng.uniform(-1, 1, 2)
    r = rng.uniform(0.1, 1.0)
    th = 2 * np.pi * np.arange(256) / 256
    ring = c + r * np.column_stack([np.cos(th), np.sin(th)])
    assert h.eval(ring).mean() == pytest.approx(h.eval(c[None])[0], abs=1e-8 * h.scale * (1 + r) ** 6)


# -- gradients ------------------------------------------------------------------------

def _interior_points(field, rng, n=100):
    if isinstance(field, DiskMode):
        r = 0.9 * np.sqrt(rng.random(n))
        th = 2 * np.pi * rng.random(n)
        return np.column_stack([r * np.cos(th), r * np.sin(th)])
    if isinstance(field, IntervalMode):
        return rng.uniform(0.05, 0.95, (n, 1))
    if isinstance(field, ExtensionField):
        base = _interior_points(field.base, rng, n)
        return np.column_stack([base, rng.uniform(-0.5, 0.5, n)])
    return rng.uniform(0.05, 0.95, (n, 2))


FIELDS = [
    RectangleMode(3, 2),
    RectangleMode(1, 4, 2.0, 0.5),
    DiskMode(0, 2),
    DiskMode(3, 1),
    IntervalMode(4),
    HarmonicPolynomialField([0.1, -1.0, 0.5, 0.2], [0.0, 0.7, 0.0, -0.3]),
    make_extension(RectangleMode(2, 3), RectangleMode(2, 3).lam),
    make_extension(IntervalMode(2), IntervalMode(2).lam),
]


@pytest.mark.parametrize("field", FIELDS, ids=lambda f: f.kind)
def test_gradient_matches_central_differences(field, rng):
    pts = _interior_points(field, rng)
    g = field.grad(pts)
    approx = fd_grad(field, pts, 1e-6)
    scale = np.abs(g).max()
    assert np.abs(g - approx).max() <= 1e-4 * scale


def test_fem_gradient_at_centroids(lshape, rng):
    mesh = triangulate(lshape, 0.1)
    u = FEMField(mesh, np.sin(3 * mesh.vertices[:, 0]) * mesh.vertices[:, 1])
    cent = mesh.vertices[mesh.triangles].mean(axis=1)[:100]
    assert np.allclose(u.grad(cent), fd_grad(u, cent, 1e-7), rtol=1e-4, atol=1e-6)


def test_fem_field_reproduces_linear_functions(lshape, rng):
    mesh = triangulate(lshape, 0.1)
    u = FEMField(mesh, 2 * mesh.vertices[:, 0] - mesh.vertices[:, 1] + 0.5)
    pts = rng.uniform(0, 0.5, (50, 2))
    assert np.allclose(u.eval(pts), 2 * pts[:, 0] - pts[:, 1] + 0.5, atol=1e-12)
    assert np.allclose(u.grad(pts), [2.0, -1.0])


def test_fem_field_signals_points_outside_mesh(lshape):
    mesh = triangulate(lshape, 0.1)
    u = FEMField(mesh, np.ones(mesh.n_vertices))
    vals = u.eval(np.array([[0.75, 0.75], [0.25, 0.25], [2.0, 0.0]]))
    assert np.isnan(vals[0]) and vals[1] == pytest.approx(1.0) and np.isnan(vals[2])


def test_fem_field_needs_one_value_per_vertex(lshape):
    mesh = triangulate(lshape, 0.2)
    with pytest.raises(FieldError):
        FEMField(mesh, np.ones(3))


# -- eigenfunction oracles ----------------------------------------------------------

def test_disk_mode_dirichlet_condition():
    th = np.linspace(0, 2 * np.pi, 100)
    u = DiskMode(2, 2)
    assert np.abs(u.eval(np.column_stack([np.cos(th), np.sin(th)]))).max() < 1e-12
    assert np.all(np.isfinite(u.grad(np.array([[0.0, 0.0], [1e-12, 0.0]]))))


def test_invalid_mode_indices():
    with pytest.raises(FieldError):
        RectangleMode(0, 1)
    with pytest.raises(FieldError):
        IntervalMode(0)


# -- extensions ---------------------------------------------------------------------

def test_extension_values():
    h = make_extension(IntervalMode(1), math.pi**2)
    assert h.eval(np.array([[0.5, 0.0]]))[0] == pytest.approx(1.0)
    assert h.eval(np.array([[0.5, math.log(2) / math.pi]]))[0] == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("base", [RectangleMode(2, 1), IntervalMode(3), DiskMode(1, 1)],
                         ids=lambda f: f.kind)
def test_extension_is_harmonic(base, rng):
    h = make_extension(base, base.lam)
    step = 1e-3
    for p in _interior_points(h, rng, 5):
        lap = 0.0
        for axis in range(len(p)):
            e = np.zeros(len(p))
            e[axis] = step
            lap += (h.eval((p + e)[None])[0] - 2 * h.eval(p[None])[0] + h.eval((p - e)[None])[0]) / step**2
        # 3-point truncation: step^2 / 12 times fourth derivatives, each at most lam^2 sup|h|
        sup_h = np.exp(np.sqrt(base.lam) * (abs(p[-1]) + step))
        assert abs(lap) <= step**2 / 6 * base.lam**2 * sup_h


def test_extension_zero_set_is_cylinder():
    u = RectangleMode(2, 1)
    h = make_extension(u, u.lam)
    t = np.linspace(-1, 1, 7)
    pts = np.column_stack([np.full(7, 0.5), np.full(7, 0.3), t])
    # rounding in sin(2 pi x) is amplified by the exponential factor
    assert np.all(np.abs(h.eval(pts)) <= 1e-15 * np.exp(math.sqrt(u.lam) * np.abs(t)))


def test_extension_needs_positive_eigenvalue():
    with pytest.raises(FieldError):
        make_extension(IntervalMode(1), 0.0)
    with pytest.raises(FieldError):
        ExtensionField(IntervalMode(1), -1.0)


def test_scaled_field():
    h = HarmonicPolynomialField.re_power(2)
    s = ScaledField(h, 2.0, domain=Plane())
    p = np.array([[1.0, 0.4]])
    assert s.eval(p)[0] == pytest.approx(h.eval(p / 2)[0])
    assert np.allclose(s.grad(p), h.grad(p / 2) / 2)


# -- suprema ------------------------------------------------------------------------

def test_sup_of_linear_field():
    s = sup_on_ball(HarmonicPolynomialField([0.0, 1.0]), Ball((0, 0), 1.0), Plane())
    assert s.value == pytest.approx(1.0, rel=1e-9)
    assert np.allclose(np.abs(s.point), [1.0, 0.0], atol=1e-6)


@pytest.mark.parametrize("r", [0.1, 0.5, 2.0])
def test_sup_of_re_z_squared(r):
    s = sup_on_ball(HarmonicPolynomialField.re_power(2), Ball((0, 0), r), Plane())
    assert s.value == pytest.approx(r * r, rel=1e-6)


def test_sup_of_ground_state_at_center():
    s = sup_on_ball(RectangleMode(1, 1), Ball((0.5, 0.5), 0.1), PolygonDomain.rectangle())
    assert s.value == pytest.approx(1.0, rel=1e-9)
    assert np.allclose(s.point, [0.5, 0.5], atol=1e-4)


def test_sup_restricted_to_domain():
    # |2 - y| peaks at y = -1 on the full ball but at y = 0 on the upper half
    h = FunctionField(lambda p: 2 - p[..., 1], domain=HalfPlane())
    assert sup_on_ball(h, Ball((0, 0), 1.0), HalfPlane()).value == pytest.approx(2.0, rel=1e-9)
    assert sup_on_ball(h, Ball((0, 0), 1.0), Plane()).value == pytest.approx(3.0, rel=1e-9)


def test_sup_on_three_dimensional_ball():
    u = IntervalMode(1)
    h = make_extension(u, u.lam)
    # sup over B((x0, 0), r) of |sin(pi x)| e^(pi t) in the strip
    s = sup_on_ball(make_extension(RectangleMode(1, 1), RectangleMode(1, 1).lam),
                    Ball((0.5, 0.5, 0.0), 0.2))
    kappa = math.sqrt(2) * math.pi
    grid = np.linspace(-0.2, 0.2, 401)
    X, Y = np.meshgrid(grid, grid)
    inside = X**2 + Y**2 <= 0.04
    vals = (np.sin(np.pi * (0.5 + X)) * np.sin(np.pi * (0.5 + Y))
            * np.exp(kappa * np.sqrt(np.maximum(0.04 - X**2 - Y**2, 0))))[inside]
    assert s.value == pytest.approx(vals.max(), rel=1e-4)
    assert h.dim == 2


def test_sup_needs_intersection():
    with pytest.raises(ValueError):
        sup_on_ball(RectangleMode(1, 1), Ball((5.0, 5.0), 0.1), PolygonDomain.rectangle())


# -- boundary Hölder exponent ----------------------------------------------------------

def test_holder_exponent_linear_vanishing():
    p = LipschitzPatch.flat(radius=1.0, tau=0.1)
    rep = holder_boundary_check(HarmonicPolynomialField([0.0, 0.0], [0.0, 1.0]), p)
    assert rep.beta == pytest.approx(1.0, abs=0.02)


def test_holder_exponent_of_xy():
    p = LipschitzPatch.flat(radius=1.0, tau=0.1)
    rep = holder_boundary_check(HarmonicPolynomialField.im_power(2), p)
    assert rep.beta == pytest.approx(1.0, abs=0.05)


def test_holder_exponent_sector_field():
    from nodalab.verify import sector_case

    patch, h, beta = sector_case(0.2, reflex=True)
    rep = holder_boundary_check(h, patch, extent=0.5)
    assert 0 < rep.beta <= 1.0 + 1e-6


def test_holder_rejects_nonvanishing_field():
    p = LipschitzPatch.flat(radius=1.0, tau=0.1)
    with pytest.raises(FieldError):
        holder_boundary_check(HarmonicPolynomialField([0.0, 1.0]), p)
