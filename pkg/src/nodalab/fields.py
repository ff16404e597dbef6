"""Scalar fields with a common evaluation contract.

Every field evaluates on arrays of points of shape ``(..., dim)`` and
returns values of shape ``(...)``; ``grad`` returns ``(..., dim)``.
``local_eval(points, cell_ids)`` is the hook used by quadrature: FEM
fields evaluate their linear polynomial on the given mesh cell there,
other fields ignore the cell ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import special
from scipy.optimize import brentq
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .geometry import (BOUNDARY, INSIDE, OUTSIDE, Ball, Cylinder, GeometryError,
                       HalfPlane, LipschitzPatch, Plane, PolygonDomain, Strip)


class FieldError(ValueError):
    """Invalid field construction or violated field precondition."""


class ScalarField:
    kind: str = "generic"
    dim: int = 2
    domain = None

    def __call__(self, pts):
        return self.eval(pts)

    def eval(self, pts) -> np.ndarray:
        raise NotImplementedError

    def grad(self, pts) -> np.ndarray:
        raise NotImplementedError

    def local_eval(self, pts, cell_ids=None) -> np.ndarray:
        return self.eval(pts)

    @property
    def scale(self) -> float:
        """Typical magnitude, used to scale absolute tolerances."""
        return 1.0


def _split(pts):
    pts = np.asarray(pts, dtype=float)
    return pts[..., 0], pts[..., 1]


@dataclass(eq=False)
class FunctionField(ScalarField):
    """Field defined by plain callables."""

    func: object
    gradient: object = None
    kind: str = "generic"
    dim: int = 2
    domain: object = dc_field(default_factory=Plane)
    magnitude: float = 1.0

    def eval(self, pts):
        return np.asarray(self.func(np.asarray(pts, dtype=float)), dtype=float)

    def grad(self, pts):
        if self.gradient is None:
            raise FieldError("no gradient supplied")
        return np.asarray(self.gradient(np.asarray(pts, dtype=float)), dtype=float)

    @property
    def scale(self):
        return self.magnitude


@dataclass(eq=False)
class HarmonicPolynomialField(ScalarField):
    """``h = sum_j a_j Re((z - z0)^j) + b_j Im((z - z0)^j)``."""

    re_coeffs: np.ndarray
    im_coeffs: np.ndarray = None
    center: complex = 0.0
    domain: object = dc_field(default_factory=Plane)
    kind: str = "harmonic_poly"
    dim: int = 2

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.re_coeffs, dtype=float))
        b = np.zeros_like(a) if self.im_coeffs is None else np.atleast_1d(np.asarray(self.im_coeffs, dtype=float))
        n = max(a.size, b.size)
        a = np.pad(a, (0, n - a.size))
        b = np.pad(b, (0, n - b.size))
        self.re_coeffs, self.im_coeffs = a, b
        # h = Re(P(z)) with P having complex coefficients a_j - i b_j
        self._poly = a - 1j * b
        self._dpoly = self._poly[1:] * np.arange(1, n)
        self.center = complex(self.center)

    @property
    def degree(self) -> int:
        nz = np.nonzero(np.abs(self._poly) > 0)[0]
        return int(nz.max()) if nz.size else 0

    @classmethod
    def re_power(cls, k: int, coeff: float = 1.0, **kw):
        a = np.zeros(k + 1)
        a[k] = coeff
        return cls(a, None, **kw)

    @classmethod
    def im_power(cls, k: int, coeff: float = 1.0, **kw):
        b = np.zeros(k + 1)
        b[k] = coeff
        return cls(np.zeros(k + 1), b, **kw)

    def _z(self, pts):
        x, y = _split(pts)
        return (x + 1j * y) - self.center

    @staticmethod
    def _horner(coeffs, z):
        out = np.zeros(np.shape(z), dtype=complex)
        for c in coeffs[::-1]:
            out = out * z + c
        return out

    def eval(self, pts):
        return self._horner(self._poly, self._z(pts)).real

    def grad(self, pts):
        d = self._horner(self._dpoly, self._z(pts)) if self._dpoly.size else np.zeros(np.shape(self._z(pts)), complex)
        return np.stack([d.real, -d.imag], axis=-1)

    def laplacian(self, pts) -> np.ndarray:
        return np.zeros(np.shape(self._z(pts)))

    @property
    def scale(self):
        return float(np.sum(np.abs(self._poly))) or 1.0

    def spec(self) -> str:
        """Expression such as ``1.0*Re(z^2)+-0.5*Im((z-0.25)^3)`` (real centers only)."""
        if self.center.imag != 0:
            raise FieldError("expressions support real centers only")
        c = self.center.real
        base = "z" if c == 0 else (f"(z-{c!r})" if c > 0 else f"(z+{-c!r})")
        terms = []
        for j, (a, b) in enumerate(zip(self.re_coeffs, self.im_coeffs)):
            if a:
                terms.append(f"{float(a)!r}*Re({base}^{j})")
            if b:
                terms.append(f"{float(b)!r}*Im({base}^{j})")
        return "+".join(terms) or "0"


@dataclass(eq=False)
class RectangleMode(ScalarField):
    """Dirichlet eigenfunction ``sin(m pi x / a) sin(n pi y / b)`` of a rectangle."""

    m: int
    n: int
    a: float = 1.0
    b: float = 1.0
    origin: tuple = (0.0, 0.0)
    kind: str = "rectangle"
    dim: int = 2

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise FieldError("rectangle mode indices must be positive")
        self.domain = PolygonDomain.rectangle(self.a, self.b, self.origin)

    @property
    def lam(self) -> float:
        return math.pi**2 * (self.m**2 / self.a**2 + self.n**2 / self.b**2)

    def eval(self, pts):
        x, y = _split(pts)
        kx, ky = self.m * math.pi / self.a, self.n * math.pi / self.b
        return np.sin(kx * (x - self.origin[0])) * np.sin(ky * (y - self.origin[1]))

    def grad(self, pts):
        x, y = _split(pts)
        kx, ky = self.m * math.pi / self.a, self.n * math.pi / self.b
        X, Y = kx * (x - self.origin[0]), ky * (y - self.origin[1])
        return np.stack([kx * np.cos(X) * np.sin(Y), ky * np.sin(X) * np.cos(Y)], axis=-1)


@dataclass(eq=False)
class IntervalMode(ScalarField):
    """Dirichlet eigenfunction ``sin(m pi x / a)`` of the interval ``(0, a)``."""

    m: int
    a: float = 1.0
    kind: str = "interval"
    dim: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise FieldError("interval mode index must be positive")
        self.domain = (0.0, self.a)

    @property
    def lam(self) -> float:
        return (self.m * math.pi / self.a) ** 2

    def eval(self, pts):
        x = np.asarray(pts, dtype=float)
        x = x[..., 0] if x.ndim and x.shape[-1:] == (1,) else x
        return np.sin(self.m * math.pi * x / self.a)

    def grad(self, pts):
        x = np.asarray(pts, dtype=float)
        x = x[..., 0] if x.ndim and x.shape[-1:] == (1,) else x
        k = self.m * math.pi / self.a
        return (k * np.cos(k * x))[..., None]


def bessel_zero(k: int, j: int) -> float:
    """The ``j``-th positive zero of ``J_k`` by bracketing and Brent's method."""
    if k < 0 or j < 1:
        raise FieldError("need k >= 0 and j >= 1")
    step = 0.25
    x = max(k, 1e-3) * 0.5 + 1e-3
    f_prev = special.jv(k, x)
    found = 0
    while True:
        x_next = x + step
        f_next = special.jv(k, x_next)
        if f_prev == 0.0:
            found += 1
            if found == j:
                return x
        elif f_prev * f_next < 0:
            found += 1
            if found == j:
                return brentq(lambda t: special.jv(k, t), x, x_next, xtol=1e-15, rtol=1e-15, maxiter=200)
        x, f_prev = x_next, f_next


@dataclass(eq=False)
class DiskMode(ScalarField):
    """Dirichlet eigenfunction ``J_k(j_{k,j} r) cos(k theta)`` of the unit disk."""

    k: int
    j: int
    kind: str = "disk"
    dim: int = 2

    def __post_init__(self):
        self.zero = bessel_zero(self.k, self.j)
        self.domain = PolygonDomain.regular_polygon(256)

    @property
    def lam(self) -> float:
        return self.zero**2

    def eval(self, pts):
        x, y = _split(pts)
        r = np.hypot(x, y)
        return special.jv(self.k, self.zero * r) * np.cos(self.k * np.arctan2(y, x))

    def grad(self, pts):
        x, y = _split(pts)
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        w = self.zero
        dr = w * special.jvp(self.k, w * r) * np.cos(self.k * th)
        safe = np.maximum(r, 1e-300)
        if self.k == 0:
            jr = np.zeros_like(r)
        else:
            # J_k(w r) / r has the finite limit w/2 for k = 1 and 0 for k > 1
            small = r < 1e-8
            jr = np.where(small, (w / 2 if self.k == 1 else 0.0), special.jv(self.k, w * r) / safe)
        dth = -self.k * jr * np.sin(self.k * th)
        c, s = np.cos(th), np.sin(th)
        return np.stack([dr * c - dth * s, dr * s + dth * c], axis=-1)


@dataclass(eq=False)
class FEMField(ScalarField):
    """Piecewise-linear field given by values at all mesh vertices."""

    mesh: object
    values: np.ndarray
    kind: str = "fem"
    dim: int = 2

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise FieldError("one value per mesh vertex expected")
        self.values = v
        self.domain = self.mesh.domain
        p = self.mesh.vertices[self.mesh.triangles]
        self._p0 = p[:, 0]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self._inv = np.stack([np.stack([e2[:, 1], -e2[:, 0]], -1),
                              np.stack([-e1[:, 1], e1[:, 0]], -1)], 1) / det[:, None, None]
        u = v[self.mesh.triangles]
        du = np.stack([u[:, 1] - u[:, 0], u[:, 2] - u[:, 0]], axis=1)
        # gradient g solves [e1; e2] g = du
        self._grad = np.einsum("tji,tj->ti", self._inv, du)
        self._u0 = u[:, 0]
        self._tree = cKDTree(p.mean(axis=1))

    @property
    def scale(self):
        return float(np.max(np.abs(self.values))) or 1.0

    def locate(self, pts) -> np.ndarray:
        """Index of a triangle containing each point, -1 when outside the mesh."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        out = np.full(len(pts), -1)
        todo = np.arange(len(pts))
        for k in (8, 32, 128):
            if not todo.size:
                break
            k = min(k, len(self._p0))
            _, cand = self._tree.query(pts[todo], k=k)
            cand = cand.reshape(len(todo), -1)
            rel = pts[todo, None, :] - self._p0[cand]
            lam = np.einsum("nkij,nkj->nki", self._inv[cand], rel)
            tol = -1e-10
            ok = (lam[..., 0] >= tol) & (lam[..., 1] >= tol) & (lam.sum(-1) <= 1 - tol)
            hit = ok.any(axis=1)
            out[todo[hit]] = cand[hit, np.argmax(ok[hit], axis=1)]
            todo = todo[~hit]
        return out

    def local_eval(self, pts, cell_ids=None):
        if cell_ids is None:
            return self.eval(pts)
        pts = np.asarray(pts, dtype=float)
        ids = np.asarray(cell_ids)
        rel = pts - self._p0[ids]
        return self._u0[ids] + np.sum(self._grad[ids] * rel, axis=-1)

    def eval(self, pts):
        pts = np.asarray(pts, dtype=float)
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 2)
        ids = self.locate(flat)
        out = np.full(len(flat), np.nan)
        ok = ids >= 0
        out[ok] = self.local_eval(flat[ok], ids[ok])
        return out.reshape(shape)

    def grad(self, pts):
        pts = np.asarray(pts, dtype=float)
        shape = pts.shape[:-1]
        ids = self.locate(pts.reshape(-1, 2))
        out = np.full((len(ids), 2), np.nan)
        ok = ids >= 0
        out[ok] = self._grad[ids[ok]]
        return out.reshape(shape + (2,))


@dataclass(eq=False)
class ExtensionField(ScalarField):
    """Harmonic extension ``h(x, t) = u(x) exp(sqrt(lam) t)``."""

    base: ScalarField
    lam: float
    kind: str = "extension"

    def __post_init__(self):
        if not self.lam > 0:
            raise FieldError("eigenvalue must be positive")
        self.kappa = math.sqrt(self.lam)
        self.dim = self.base.dim + 1
        if self.base.dim == 1:
            lo, hi = self.base.domain
            self.domain = Strip(lo, hi)
        else:
            self.domain = Cylinder(self.base.domain)

    def _parts(self, pts):
        pts = np.asarray(pts, dtype=float)
        return pts[..., :-1], pts[..., -1]

    def eval(self, pts):
        x, t = self._parts(pts)
        return self.base.eval(x) * np.exp(self.kappa * t)

    def local_eval(self, pts, cell_ids=None):
        x, t = self._parts(pts)
        return self.base.local_eval(x, cell_ids) * np.exp(self.kappa * t)

    def grad(self, pts):
        x, t = self._parts(pts)
        e = np.exp(self.kappa * t)
        gu = self.base.grad(x) * e[..., None]
        return np.concatenate([gu, (self.kappa * self.base.eval(x) * e)[..., None]], axis=-1)

    @property
    def scale(self):
        return self.base.scale


def make_extension(u: ScalarField, lam: float) -> ExtensionField:
    """Harmonic extension of a Dirichlet eigenfunction with eigenvalue ``lam``."""
    if not lam > 0:
        raise FieldError("eigenvalue must be positive")
    return ExtensionField(u, float(lam))


@dataclass(eq=False)
class ScaledField(ScalarField):
    """``h(x / c)`` on the dilated domain ``c * Omega``."""

    base: ScalarField
    factor: float
    domain: object = None
    kind: str = "scaled"
    dim: int = 2

    def eval(self, pts):
        return self.base.eval(np.asarray(pts, dtype=float) / self.factor)

    def grad(self, pts):
        return self.base.grad(np.asarray(pts, dtype=float) / self.factor) / self.factor

    @property
    def scale(self):
        return self.base.scale


# ---------------------------------------------------------------------------
# suprema


@dataclass
class SupEstimate:
    value: float
    point: np.ndarray
    rel_error: float


def _disk_samples(center, radius, n: int, seed: int) -> np.ndarray:
    u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    r = radius * np.sqrt(u[:, 0])
    th = 2 * np.pi * u[:, 1]
    pts = center + np.column_stack([r * np.cos(th), r * np.sin(th)])
    ring = 2 * np.pi * np.arange(1024) / 1024
    rim = center + radius * np.column_stack([np.cos(ring), np.sin(ring)])
    return np.vstack([center[None, :], pts, rim])


def _domain_boundary_in_disk(domain, center, radius, n: int = 2048) -> np.ndarray:
    """Boundary points of the domain inside the disk (closure matters for sups)."""
    if isinstance(domain, LipschitzPatch):
        c = domain.to_local(center)[0]
        ys = np.linspace(c[0] - radius, c[0] + radius, n)
        ys = ys[np.abs(ys) <= domain.radius]
        pts = domain.boundary_point(ys)
    elif isinstance(domain, HalfPlane):
        xs = np.linspace(center[0] - radius, center[0] + radius, n)
        pts = np.column_stack([xs, np.zeros_like(xs)])
    elif isinstance(domain, PolygonDomain):
        pts = []
        for e in domain.edges():
            length = np.linalg.norm(e[1] - e[0])
            m = max(2, int(np.ceil(n * length / (2 * np.pi * radius))))
            m = min(m, 20 * n)
            t = np.linspace(0, 1, m)[:, None]
            pts.append(e[0] + t * (e[1] - e[0]))
        pts = np.concatenate(pts)
    elif isinstance(domain, Strip):
        ts = np.linspace(center[1] - radius, center[1] + radius, n)
        pts = np.concatenate([np.column_stack([np.full(n, x), ts]) for x in (domain.a, domain.b)])
    else:
        return np.zeros((0, 2))
    return pts[np.linalg.norm(pts - center, axis=1) <= radius]


def _ascend(objective, feasible, starts, step, min_step, max_iter=400):
    """Deterministic compass search maximizing ``objective`` over feasible points."""
    dirs = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]], float)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    best_pts = np.array(starts, dtype=float)
    best_val = objective(best_pts)
    steps = np.full(len(best_pts), step)
    for _ in range(max_iter):
        active = steps > min_step
        if not active.any():
            break
        cand = best_pts[active, None, :] + steps[active, None, None] * dirs[None]
        flat = cand.reshape(-1, 2)
        vals = np.full(len(flat), -np.inf)
        ok = feasible(flat)
        if ok.any():
            vals[ok] = objective(flat[ok])
        vals = vals.reshape(-1, len(dirs))
        j = np.argmax(vals, axis=1)
        gain = vals[np.arange(len(j)), j]
        idx = np.nonzero(active)[0]
        better = gain > best_val[idx]
        best_pts[idx[better]] = cand[better, j[better]]
        best_val[idx[better]] = gain[better]
        steps[idx[~better]] *= 0.5
    return best_pts, best_val


def sup_on_ball(field: ScalarField, ball: Ball, domain=None, n_samples: int = 10_000,
                seed: int = 0, refine: bool = True) -> SupEstimate:
    """Estimate ``sup |h|`` over ``ball`` intersected with the closed domain.

    Low-discrepancy samples (fixed seed) plus the rim of the ball and the
    domain boundary inside it are scored, then the best candidates are
    polished by compass search. For extensions of planar fields the
    ``t``-direction is maximized in closed form: on the fiber over ``x``
    the largest value of ``exp(kappa t)`` is at ``t0 + sqrt(r^2 - |x - x0|^2)``.
    """
    domain = domain if domain is not None else field.domain
    c = np.asarray(ball.center, dtype=float)
    R = ball.radius
    three_d = ball.dim == 3
    if three_d:
        if not isinstance(field, ExtensionField) or field.base.dim != 2:
            raise FieldError("three-dimensional balls need the extension of a planar field")
        base_domain = domain.base if isinstance(domain, Cylinder) else field.base.domain
        x0, t0 = c[:2], c[2]

        def objective(p):
            s = np.sqrt(np.maximum(R**2 - np.sum((p - x0) ** 2, axis=-1), 0.0))
            return np.abs(field.base.eval(p)) * np.exp(field.kappa * (t0 + s))

        geo_domain, c2 = base_domain, x0
    else:
        def objective(p):
            return np.abs(field.eval(p))

        geo_domain, c2 = domain, c

    def feasible(p):
        inside_ball = np.sum((p - c2) ** 2, axis=-1) <= R * R * (1 + 1e-12)
        out = inside_ball.copy()
        if geo_domain is not None and out.any():
            out[out] = geo_domain.classify(p[out]) != OUTSIDE
        return out

    pts = _disk_samples(c2, R, n_samples, seed)
    pts = np.vstack([pts, _domain_boundary_in_disk(geo_domain, c2, R)])
    pts = pts[feasible(pts)]
    if not len(pts):
        raise GeometryError("ball does not meet the domain")
    vals = objective(pts)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    order = np.argsort(-vals, kind="stable")
    best_sample = float(vals[order[0]])
    point, value = pts[order[0]], best_sample
    if refine:
        starts = pts[order[:8]]
        bp, bv = _ascend(objective, feasible, starts, R / 64, R * 1e-9)
        i = int(np.argmax(bv))
        if bv[i] > value:
            point, value = bp[i], float(bv[i])
    rel = (value - best_sample) / value if value > 0 else 0.0
    if three_d:
        s = math.sqrt(max(R**2 - float(np.sum((point - c2) ** 2)), 0.0))
        point = np.array([point[0], point[1], c[2] + s])
    return SupEstimate(float(value), np.asarray(point), float(max(rel, 1e-12)))


# ---------------------------------------------------------------------------
# boundary Hölder exponent


@dataclass
class HolderReport:
    beta: float
    r_squared: float
    rays: int
    distances: np.ndarray
    values: np.ndarray


def holder_boundary_check(field: ScalarField, patch: LipschitzPatch, n_rays: int = 33,
                          n_dist: int = 20, extent: float = 0.8) -> HolderReport:
    """Fit ``log |h|`` against ``log dist(y, boundary)`` along inward rays."""
    r = patch.radius
    y1 = np.linspace(-extent * r, extent * r, n_rays)
    feet = patch.boundary_point(y1)
    ring = patch.to_world(np.column_stack([y1, patch.f(y1) + 0.5 * r]))
    scale = max(float(np.max(np.abs(field.eval(ring)))), 1e-300)
    if np.max(np.abs(field.eval(feet))) > 1e-8 * scale:
        raise FieldError("field does not vanish on the patch boundary")
    steps = np.geomspace(1e-4 * r, 1e-1 * r, n_dist)
    pts = feet[:, None, :] + steps[None, :, None] * patch.normal[None, None, :]
    vals = np.abs(field.eval(pts))
    dist = patch.boundary_distance(pts.reshape(-1, 2)).reshape(vals.shape)
    usable = np.all(vals > 1e-13 * scale, axis=1)
    if not usable.any():
        raise FieldError("field vanishes along every ray")
    lx = np.log(dist[usable])
    ly = np.log(vals[usable])
    lx_c = lx - lx.mean(axis=1, keepdims=True)
    ly_c = ly - ly.mean(axis=1, keepdims=True)
    beta = float(np.sum(lx_c * ly_c) / np.sum(lx_c * lx_c))
    resid = ly_c - beta * lx_c
    r2 = 1.0 - float(np.sum(resid**2) / max(np.sum(ly_c**2), 1e-300))
    if not beta > 0:
        raise FieldError(f"fitted exponent {beta:.4g} is not positive")
    return HolderReport(beta, r2, int(usable.sum()), dist[usable], vals[usable])
