"""Zero sets of planar fields as segment soups, and their lengths."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .fields import ExtensionField, FEMField, ScalarField
from .geometry import (BOUNDARY, INSIDE, OUTSIDE, Ball, Cube, HalfPlane, LipschitzPatch,
                       Plane, PolygonDomain, Strip)
from .meshing import triangulate

LEVEL_SHIFT = 1e-14


class NodalError(ValueError):
    """Invalid nodal extraction request."""


@dataclass
class NodalSet:
    """Segments of a zero set.

    With ``cylinder=True`` the set stands for ``segments x R``, the zero
    set of the harmonic extension of a planar field.
    """

    segments: np.ndarray
    resolution: float
    cylinder: bool = False

    def __post_init__(self):
        self.segments = np.asarray(self.segments, dtype=float).reshape(-1, 2, 2)

    @property
    def total_length(self) -> float:
        return float(np.sum(np.linalg.norm(self.segments[:, 1] - self.segments[:, 0], axis=1)))

    def to_json(self) -> dict:
        return {"segments": self.segments.tolist(), "total_length": self.total_length,
                "resolution": self.resolution}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    def to_svg(self, outline: np.ndarray | None = None, size: int = 480) -> str:
        pts = [self.segments.reshape(-1, 2)]
        if outline is not None:
            pts.append(np.asarray(outline))
        allp = np.concatenate(pts) if len(pts[0]) or outline is not None else np.zeros((1, 2))
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        span = float(max(hi - lo)) or 1.0
        pad = 10

        def tx(p):
            q = (p - lo) / span * (size - 2 * pad) + pad
            return q[..., 0], size - q[..., 1]

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}">']
        if outline is not None:
            x, y = tx(np.asarray(outline))
            path = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(x, y))
            out.append(f'<polygon points="{path}" fill="none" stroke="black" stroke-width="1"/>')
        x, y = tx(self.segments)
        for (x1, x2), (y1, y2) in zip(x, y):
            out.append(f'<line x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}" '
                       'stroke="red" stroke-width="1"/>')
        out.append("</svg>")
        return "\n".join(out)


def grid_triangulation(bbox, resolution: float):
    """Uniform grid over ``bbox`` with each square split along its main diagonal."""
    xmin, ymin, xmax, ymax = bbox
    nx = max(1, int(math.ceil((xmax - xmin) / resolution - 1e-9)))
    ny = max(1, int(math.ceil((ymax - ymin) / resolution - 1e-9)))
    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return verts, tris


def marching_triangles(vertices: np.ndarray, triangles: np.ndarray, values: np.ndarray,
                       boundary: np.ndarray | None = None, scale: float = 1.0) -> np.ndarray:
    """Zero set of the piecewise-linear interpolant, one segment per crossed cell.

    Boundary vertices with zero value stay exactly zero and contribute
    their position as a zero point; other values below
    ``LEVEL_SHIFT * scale`` in magnitude are lifted to that level. Cells whose only zero points are two
    boundary vertices (the zero set is a boundary edge) are skipped.
    """
    v = np.array(values, dtype=float)
    if boundary is None:
        boundary = np.zeros(len(v), dtype=bool)
    bzero = boundary & (v == 0.0)
    # rounding noise on zero lines would give random signs and zigzag segments
    v = np.where((np.abs(v) < LEVEL_SHIFT * scale) & ~bzero, LEVEL_SHIFT * scale, v)
    s = np.sign(v)
    T = triangles
    sv = s[T]
    has_neg = (sv < 0).any(axis=1)
    has_pos = (sv > 0).any(axis=1)
    cand = np.nonzero(has_neg & has_pos)[0]
    if not cand.size:
        return np.zeros((0, 2, 2))
    P = vertices[T[cand]]
    V = v[T[cand]]
    S = sv[cand]
    pts = np.full((len(cand), 6, 2), np.nan)
    k = 0
    for i in range(3):
        # zero vertex
        z = S[:, i] == 0
        pts[z, k] = P[z, i]
        k += 1
    for i in range(3):
        j = (i + 1) % 3
        cross = S[:, i] * S[:, j] < 0
        t = np.where(cross, V[:, i] / np.where(cross, V[:, i] - V[:, j], 1.0), 0.0)
        q = P[:, i] + t[:, None] * (P[:, j] - P[:, i])
        pts[cross, k] = q[cross]
        k += 1
    valid = ~np.isnan(pts[..., 0])
    count = valid.sum(axis=1)
    good = count == 2
    order = np.argsort(~valid, axis=1, kind="stable")
    first = pts[np.arange(len(pts)), order[:, 0]]
    second = pts[np.arange(len(pts)), order[:, 1]]
    seg = np.stack([first, second], axis=1)[good]
    return seg


def _clip_to_domain(segments: np.ndarray, domain, tol_len: float) -> np.ndarray:
    """Drop pieces of segments outside the open domain (bisection on crossings)."""
    if domain is None or isinstance(domain, Plane) or not len(segments):
        return segments
    a, b = segments[:, 0], segments[:, 1]
    ca = domain.classify(a) == INSIDE
    cb = domain.classify(b) == INSIDE
    mid = domain.classify(0.5 * (a + b)) == INSIDE
    keep_full = ca & cb & mid
    partial = (ca ^ cb)
    out = [segments[keep_full]]
    if partial.any():
        aa = np.where(ca[partial, None], a[partial], b[partial])  # inside end
        bb = np.where(ca[partial, None], b[partial], a[partial])  # outside end
        lo = np.zeros(len(aa))
        hi = np.ones(len(aa))
        for _ in range(60):
            m = 0.5 * (lo + hi)
            inside = domain.classify(aa + m[:, None] * (bb - aa)) == INSIDE
            lo = np.where(inside, m, lo)
            hi = np.where(inside, hi, m)
        cut = aa + lo[:, None] * (bb - aa)
        out.append(np.stack([aa, cut], axis=1))
    seg = np.concatenate(out)
    length = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1)
    return seg[length > tol_len]


def extract_nodal(field: ScalarField, domain=None, resolution: float = 0.01,
                  window=None) -> NodalSet:
    """Zero set of ``field`` in the open domain.

    FEM fields use their own mesh. Axis-aligned rectangles and model
    domains with a ``window`` (bounding box) use a uniform triangulated
    grid; other polygons are meshed at ``resolution``. Extensions of
    interval modes give vertical lines over the ``t``-range of ``window``;
    extensions of planar fields give a cylinder set over the planar zero set.
    """
    if isinstance(field, ExtensionField):
        if field.base.dim == 1:
            lo, hi = field.base.domain
            t_lo, t_hi = (window[1], window[3]) if window is not None else (-1.0, 1.0)
            roots = zeros_1d(field.base, lo, hi)
            seg = np.array([[[x, t_lo], [x, t_hi]] for x in roots]).reshape(-1, 2, 2)
            return NodalSet(seg, resolution)
        ns = extract_nodal(field.base, field.base.domain if domain is None else getattr(domain, "base", domain),
                           resolution, window)
        ns.cylinder = True
        return ns

    domain = field.domain if domain is None else domain
    scale = field.scale
    if isinstance(field, FEMField):
        mesh = field.mesh
        seg = marching_triangles(mesh.vertices, mesh.triangles, field.values,
                                 mesh.boundary_vertex, scale)
        diam = mesh.domain.diameter if mesh.domain is not None else np.ptp(mesh.vertices)
        seg = seg[np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1) > 1e-12 * diam]
        return NodalSet(seg, mesh.h_max)

    if window is not None:
        bbox = tuple(float(w) for w in window)
    elif isinstance(domain, PolygonDomain):
        bbox = domain.bounds
    else:
        raise NodalError("a window is required for unbounded domains")
    diam = math.hypot(bbox[2] - bbox[0], bbox[3] - bbox[1])
    if resolution > diam / 8:
        raise NodalError("resolution too coarse for the domain size")

    outside = None
    if isinstance(domain, PolygonDomain) and not (window is None and domain.is_axis_rectangle()):
        if window is None:
            mesh = triangulate(domain, resolution)
            verts, tris, bnd = mesh.vertices, mesh.triangles, mesh.boundary_vertex
        else:
            verts, tris = grid_triangulation(bbox, resolution)
            bnd = domain.boundary_distance(verts) <= 1e-10 * diam
            outside = domain.classify(verts) == OUTSIDE
    else:
        verts, tris = grid_triangulation(bbox, resolution)
        if isinstance(domain, (PolygonDomain, LipschitzPatch, HalfPlane, Strip)):
            bnd = domain.classify(verts) == BOUNDARY
            if isinstance(domain, PolygonDomain):
                bnd |= domain.boundary_distance(verts) <= 1e-10 * diam
        else:
            bnd = np.zeros(len(verts), dtype=bool)
    vals = np.asarray(field.eval(verts), dtype=float)
    if outside is not None:
        # extension by zero, so that sign changes across the boundary add no segments
        vals = np.where(outside, 0.0, vals)
        bnd = bnd | outside
    # boundary values of vanishing fields are set to exact zeros
    snap = bnd & (np.abs(vals) <= 1e-8 * scale)
    vals = np.where(snap, 0.0, vals)
    seg = marching_triangles(verts, tris, vals, snap, scale)
    seg = _clip_to_domain(seg, domain, 1e-12 * diam)
    return NodalSet(seg, resolution)


def _segment_disk_interval(seg: np.ndarray, center: np.ndarray, r: float):
    """Parameter interval ``[t0, t1]`` of each segment inside the disk."""
    p = seg[:, 0] - center
    d = seg[:, 1] - seg[:, 0]
    a = np.sum(d * d, axis=1)
    b = np.sum(p * d, axis=1)
    c = np.sum(p * p, axis=1) - r * r
    disc = b * b - a * c
    ok = (disc > 0) & (a > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    safe_a = np.where(a > 0, a, 1.0)
    t0 = np.clip((-b - sq) / safe_a, 0, 1)
    t1 = np.clip((-b + sq) / safe_a, 0, 1)
    t1 = np.where(ok, np.maximum(t1, t0), t0)
    return t0, t1, np.sqrt(a), ok


def measure_in_ball(ns: NodalSet, ball: Ball) -> float:
    """Length (or area for cylinder sets in a 3D ball) of the zero set inside ``ball``."""
    if not len(ns.segments):
        return 0.0
    c = np.asarray(ball.center, dtype=float)
    r = ball.radius
    if ball.dim == 2:
        if ns.cylinder:
            raise NodalError("cylinder zero sets need a three-dimensional ball")
        t0, t1, length, ok = _segment_disk_interval(ns.segments, c, r)
        return float(np.sum(np.where(ok, (t1 - t0) * length, 0.0)))
    if not ns.cylinder:
        raise NodalError("planar zero sets need a two-dimensional ball")
    # area of (segment x R) inside the ball: integrate the chord 2 sqrt(r^2 - dist^2)
    x0 = c[:2]
    seg = ns.segments
    p = seg[:, 0] - x0
    d = seg[:, 1] - seg[:, 0]
    L = np.linalg.norm(d, axis=1)
    good = L > 0
    p, d, L = p[good], d[good], L[good]
    u_dir = d / L[:, None]
    foot = np.sum(p * u_dir, axis=1)  # arc parameter of p relative to the foot point
    delta2 = np.sum(p * p, axis=1) - foot**2
    a2 = r * r - delta2
    ok = a2 > 0
    a = np.sqrt(np.where(ok, a2, 0.0))
    lo = np.clip(foot, -a, a)
    hi = np.clip(foot + L, -a, a)

    def F(u):
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(a > 0, u / np.where(a > 0, a, 1.0), 0.0)
        return u * np.sqrt(np.maximum(a * a - u * u, 0.0)) + a * a * np.arcsin(np.clip(ratio, -1, 1))

    area = np.where(ok, F(hi) - F(lo), 0.0)
    return float(np.sum(area))


def measure_in_cube(ns: NodalSet, cube: Cube) -> float:
    """Length of the planar zero set inside a (rotated) square."""
    if not len(ns.segments):
        return 0.0
    loc = cube.to_local(ns.segments.reshape(-1, 2)).reshape(-1, 2, 2)
    h = cube.side / 2
    a, b = loc[:, 0], loc[:, 1]
    d = b - a
    t0 = np.zeros(len(a))
    t1 = np.ones(len(a))
    for k in range(2):
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-h - a[:, k]) / d[:, k]
            tb = (h - a[:, k]) / d[:, k]
        lo = np.where(d[:, k] == 0, np.where(np.abs(a[:, k]) <= h, -np.inf, np.inf), np.minimum(ta, tb))
        hi = np.where(d[:, k] == 0, np.where(np.abs(a[:, k]) <= h, np.inf, -np.inf), np.maximum(ta, tb))
        t0 = np.maximum(t0, lo)
        t1 = np.minimum(t1, hi)
    frac = np.clip(t1 - t0, 0, None)
    return float(np.sum(frac * np.linalg.norm(d, axis=1)))


def zeros_1d(u: ScalarField, a: float, b: float, n: int = 10_000) -> np.ndarray:
    """Interior zeros of a continuous function on ``(a, b)``, refined to 1e-12."""
    xs = np.linspace(a, b, n + 1)
    v = np.asarray(u.eval(xs[:, None]) if getattr(u, "dim", 1) == 1 else u.eval(xs), dtype=float)
    scale = max(float(np.max(np.abs(v))), 1e-300)
    v = np.where(np.abs(v) <= 1e-13 * scale, 0.0, v)
    f = lambda t: float(np.asarray(u.eval(np.array([[t]]))).ravel()[0])
    roots = []
    for i in range(1, n):
        if v[i] == 0.0:
            roots.append(xs[i])
    nz = np.nonzero(v != 0.0)[0]
    for i, j in zip(nz[:-1], nz[1:]):
        if v[i] * v[j] < 0 and j == i + 1:
            roots.append(brentq(f, xs[i], xs[j], xtol=1e-12))
    return np.sort(np.array(roots))


def count_zeros_1d(u: ScalarField, a: float, b: float) -> int:
    """Number of interior sign changes on a 10^4-point grid."""
    return int(len(zeros_1d(u, a, b)))
