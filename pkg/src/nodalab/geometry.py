"""Planar domains, balls, cubes and the boundary cube construction.

Domains expose a small common interface used by the quadrature, nodal
and verification code:

``classify(points)``
    integer codes, 1 inside, 0 on the boundary (within tolerance), -1 outside.
``cells_near(center, radius)``
    counter-clockwise triangles whose union is exactly the part of the
    domain inside the bounding box of the disk ``B(center, radius)``.
``diameter``
    used to scale tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon, box as shapely_box

INSIDE, BOUNDARY, OUTSIDE = 1, 0, -1
_LABELS = {INSIDE: "inside", BOUNDARY: "boundary", OUTSIDE: "outside"}
BOUNDARY_RTOL = 1e-12
INNER_CUBE_SEPARATION = 0.1


class GeometryError(ValueError):
    """Invalid geometric input or violated construction hypothesis."""


class PreconditionError(GeometryError):
    """A documented precondition of an operation does not hold."""


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _as_points(pts) -> np.ndarray:
    arr = np.asarray(pts, dtype=float)
    return arr.reshape(-1, arr.shape[-1])


def _bbox_triangles(xmin, ymin, xmax, ymax) -> np.ndarray:
    a = (xmin, ymin)
    b = (xmax, ymin)
    c = (xmax, ymax)
    d = (xmin, ymax)
    return np.array([[a, b, c], [a, c, d]], dtype=float)


def orient_ccw(tris: np.ndarray) -> np.ndarray:
    """Return a copy of ``tris`` (T,3,2) with every triangle counter-clockwise."""
    tris = np.array(tris, dtype=float)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    flip = cross < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


# ---------------------------------------------------------------------------
# balls and cubes


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball in two or three dimensions."""

    center: tuple
    radius: float

    def __post_init__(self):
        center = tuple(float(c) for c in np.ravel(self.center))
        if len(center) not in (2, 3):
            raise GeometryError("ball center must have 2 or 3 coordinates")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeometryError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def point(self) -> np.ndarray:
        return np.array(self.center)

    def scaled(self, factor: float) -> "Ball":
        """Concentric ball with radius multiplied by ``factor``."""
        return Ball(self.center, self.radius * factor)

    def contains(self, pts) -> np.ndarray:
        pts = _as_points(pts)
        return np.linalg.norm(pts - self.point, axis=1) <= self.radius

    def volume(self) -> float:
        if self.dim == 2:
            return math.pi * self.radius**2
        return 4.0 / 3.0 * math.pi * self.radius**3


@dataclass(frozen=True)
class Cube:
    """Square with sides parallel to a local frame (rotation ``angle``)."""

    center: tuple
    side: float
    angle: float = 0.0

    def __post_init__(self):
        if not self.side > 0:
            raise GeometryError("cube side must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def diam(self) -> float:
        return self.side * math.sqrt(2.0)

    def corners(self) -> np.ndarray:
        h = self.side / 2
        local = np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
        return local @ rotation(self.angle).T + np.array(self.center)

    def to_local(self, pts) -> np.ndarray:
        return (_as_points(pts) - np.array(self.center)) @ rotation(self.angle)

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        loc = self.to_local(pts)
        return np.all(np.abs(loc) <= self.side / 2 + tol, axis=1)

    def polygon(self) -> Polygon:
        return Polygon(self.corners())


# ---------------------------------------------------------------------------
# Lipschitz graph patches


@dataclass(frozen=True, eq=False)
class LipschitzPatch:
    """Boundary patch where the domain is the region above a rotated graph.

    In local coordinates ``(y1, y2)`` the domain is ``{y2 > f(y1)}``
    for ``|y1| <= radius`` where ``f`` is the piecewise-linear
    interpolant of ``samples`` at equally spaced abscissae on
    ``[-radius, radius]``. The local frame is the rotation by ``angle``
    followed by translation to ``center``. Outside the strip
    ``|y1| <= radius`` points are classified as outside.
    """

    center: tuple
    radius: float
    angle: float
    samples: np.ndarray
    tau: float

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "samples", samples)
        samples.setflags(write=False)
        if samples.ndim != 1 or samples.size < 2:
            raise GeometryError("a patch needs at least two graph samples")
        if not self.radius > 0:
            raise GeometryError("patch radius must be positive")
        if not 0 < self.tau < 1:
            raise GeometryError("declared tau must lie in (0, 1)")
        mid = self.abscissae()
        zero = np.interp(0.0, mid, samples)
        if abs(zero) > 1e-12 * self.radius:
            raise GeometryError("graph must pass through the patch center, f(0) = 0")
        est = lipschitz_estimate(self)
        if est > self.tau * (1 + 1e-12):
            raise GeometryError(
                f"estimated Lipschitz constant {est:.6g} exceeds declared tau {self.tau:.6g}"
            )

    @classmethod
    def from_function(cls, center, radius, angle, func, tau, m: int = 512):
        ys = np.linspace(-radius, radius, m + 1)
        vals = np.asarray(func(ys), dtype=float) * np.ones_like(ys)
        return cls(center, radius, angle, vals, tau)

    @classmethod
    def flat(cls, center=(0.0, 0.0), radius=1.0, angle=0.0, tau=0.1, m: int = 512):
        return cls(center, radius, angle, np.zeros(m + 1), tau)

    def abscissae(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.samples.size)

    def f(self, y1) -> np.ndarray:
        return np.interp(y1, self.abscissae(), self.samples)

    @property
    def rot(self) -> np.ndarray:
        return rotation(self.angle)

    @property
    def normal(self) -> np.ndarray:
        """World image of the local second axis (inward direction)."""
        return self.rot[:, 1].copy()

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def to_local(self, pts) -> np.ndarray:
        return (_as_points(pts) - np.array(self.center)) @ self.rot

    def to_world(self, loc) -> np.ndarray:
        return _as_points(loc) @ self.rot.T + np.array(self.center)

    def boundary_point(self, y1) -> np.ndarray:
        y1 = np.atleast_1d(np.asarray(y1, dtype=float))
        return self.to_world(np.column_stack([y1, self.f(y1)]))

    def classify(self, pts) -> np.ndarray:
        loc = self.to_local(pts)
        tol = BOUNDARY_RTOL * self.diameter
        gap = loc[:, 1] - self.f(loc[:, 0])
        out = np.where(gap > tol, INSIDE, np.where(gap >= -tol, BOUNDARY, OUTSIDE))
        out[np.abs(loc[:, 0]) > self.radius * (1 + 1e-12)] = OUTSIDE
        return out

    def scaled(self, factor: float) -> "LipschitzPatch":
        """Patch dilated by ``factor`` about its center."""
        return LipschitzPatch(self.center, self.radius * factor, self.angle,
                              self.samples * factor, self.tau)

    def _graph_breaks(self) -> tuple[np.ndarray, np.ndarray]:
        """Graph vertices with collinear runs merged."""
        ys = self.abscissae()
        fs = self.samples
        slopes = np.diff(fs) / np.diff(ys)
        keep = np.ones(ys.size, dtype=bool)
        keep[1:-1] = np.abs(np.diff(slopes)) > 1e-12
        return ys[keep], fs[keep]

    def cells_near(self, center, radius) -> np.ndarray:
        """Triangles covering the part of the domain under the disk's local box."""
        c = self.to_local(np.asarray(center, dtype=float)[:2])[0]
        lo, hi = max(c[0] - radius, -self.radius), min(c[0] + radius, self.radius)
        if lo >= hi:
            return np.zeros((0, 3, 2))
        ys, fs = self._graph_breaks()
        inner = ys[(ys > lo) & (ys < hi)]
        xs = np.concatenate([[lo], inner, [hi]])
        gs = self.f(xs)
        top = max(c[1] + radius, gs.max()) + 1e-9 * self.radius
        if c[1] + radius <= gs.min():
            return np.zeros((0, 3, 2))
        tris = []
        for a, b, fa, fb in zip(xs[:-1], xs[1:], gs[:-1], gs[1:]):
            tris.append([[a, fa], [b, fb], [b, top]])
            tris.append([[a, fa], [b, top], [a, top]])
        tris = np.array(tris)
        world = self.to_world(tris.reshape(-1, 2)).reshape(-1, 3, 2)
        return orient_ccw(world)

    def boundary_distance(self, pts) -> np.ndarray:
        ys = self.abscissae()
        line = LineString(self.to_world(np.column_stack([ys, self.samples])))
        pts = _as_points(pts)
        return shapely.distance(line, shapely.points(pts))

    def to_json(self) -> dict:
        return {
            "center": list(self.center),
            "radius": self.radius,
            "angle": self.angle,
            "tau": self.tau,
            "samples": self.samples.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LipschitzPatch":
        return cls(data["center"], data["radius"], data.get("angle", 0.0),
                   data["samples"], data["tau"])


def lipschitz_estimate(patch: LipschitzPatch) -> float:
    """Largest absolute slope between consecutive graph samples."""
    fs = np.asarray(patch.samples, dtype=float)
    if fs.size < 2:
        raise GeometryError("need at least two samples")
    step = 2.0 * patch.radius / (fs.size - 1)
    return float(np.max(np.abs(np.diff(fs))) / step)


# ---------------------------------------------------------------------------
# polygon domains


def _signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _corner_taus(loop: np.ndarray) -> np.ndarray:
    """Lipschitz constant of the best local graph at each corner of a loop."""
    prev = np.roll(loop, 1, axis=0)
    nxt = np.roll(loop, -1, axis=0)
    a = prev - loop
    b = nxt - loop
    ang = np.abs(np.arctan2(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0], np.sum(a * b, axis=1)))
    # the boundary opens by an angle ang at each vertex; tan of half the defect
    return np.abs(np.tan((math.pi - ang) / 2))


@dataclass(frozen=True, eq=False)
class PolygonDomain:
    """Polygon with optional holes.

    ``loops[0]`` is the outer boundary (counter-clockwise), the rest are
    holes (clockwise). ``tau_global`` is the largest corner Lipschitz
    constant and ``r0`` a radius for which every boundary point sees at
    most one corner inside ``B(x, r0)``.
    """

    loops: tuple
    patches: tuple = ()
    tau_global: float = 0.0
    r0: float = 0.0
    _poly: Polygon = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        loops = tuple(np.array(l, dtype=float) for l in self.loops)
        if not loops:
            raise GeometryError("a polygon domain needs an outer loop")
        for i, loop in enumerate(loops):
            if loop.ndim != 2 or loop.shape[1] != 2 or loop.shape[0] < 3:
                raise GeometryError("each loop needs at least three 2D vertices")
            if np.allclose(loop[0], loop[-1]) and loop.shape[0] > 3:
                loop = loop[:-1]
                loops = loops[:i] + (loop,) + loops[i + 1:]
            edges = np.linalg.norm(np.roll(loop, -1, axis=0) - loop, axis=1)
            if np.any(edges <= 1e-14 * max(1.0, np.ptp(loop))):
                raise GeometryError("repeated consecutive vertices")
        if _signed_area(loops[0]) <= 0:
            raise GeometryError("outer loop must be counter-clockwise")
        for hole in loops[1:]:
            if _signed_area(hole) >= 0:
                raise GeometryError("holes must be clockwise")
        poly = Polygon(loops[0], [h for h in loops[1:]])
        if not poly.is_valid:
            raise GeometryError(f"invalid polygon: {shapely.is_valid_reason(poly)}")
        for loop in loops:
            if not LineString(np.vstack([loop, loop[:1]])).is_simple:
                raise GeometryError("self-intersecting loop")
        for l in loops:
            l.setflags(write=False)
        object.__setattr__(self, "loops", loops)
        object.__setattr__(self, "patches", tuple(self.patches))
        object.__setattr__(self, "_poly", poly)
        if self.tau_global == 0.0:
            taus = np.concatenate([_corner_taus(l) for l in loops])
            object.__setattr__(self, "tau_global", float(taus.max()))
        if self.r0 == 0.0:
            object.__setattr__(self, "r0", self._feature_radius())
        shapely.prepare(poly)

    # constructors -----------------------------------------------------
    @classmethod
    def rectangle(cls, a: float = 1.0, b: float = 1.0, origin=(0.0, 0.0)):
        x0, y0 = origin
        return cls([[[x0, y0], [x0 + a, y0], [x0 + a, y0 + b], [x0, y0 + b]]])

    @classmethod
    def l_shape(cls):
        """Unit square minus its upper-right quarter."""
        return cls([[[0, 0], [1, 0], [1, 0.5], [0.5, 0.5], [0.5, 1], [0, 1]]])

    @classmethod
    def regular_polygon(cls, n: int = 256, radius: float = 1.0, center=(0.0, 0.0)):
        th = 2 * np.pi * np.arange(n) / n
        pts = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
        return cls([pts])

    # properties -------------------------------------------------------
    @property
    def polygon(self) -> Polygon:
        return self._poly

    @property
    def outer(self) -> np.ndarray:
        return self.loops[0]

    @property
    def area(self) -> float:
        return float(self._poly.area)

    @property
    def bounds(self) -> tuple:
        return self._poly.bounds

    @property
    def diameter(self) -> float:
        pts = self.outer
        d = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))

    def edges(self) -> np.ndarray:
        """All boundary edges as an (E, 2, 2) array."""
        out = [np.stack([l, np.roll(l, -1, axis=0)], axis=1) for l in self.loops]
        return np.concatenate(out)

    def reentrant_vertices(self) -> np.ndarray:
        """Vertices where the interior angle exceeds pi."""
        out = []
        for loop in self.loops:
            a = loop - np.roll(loop, 1, axis=0)
            b = np.roll(loop, -1, axis=0) - loop
            turn = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            out.append(loop[turn < -1e-14])
        return np.concatenate(out) if out else np.zeros((0, 2))

    def is_axis_rectangle(self) -> bool:
        if len(self.loops) != 1 or len(self.outer) != 4:
            return False
        xmin, ymin, xmax, ymax = self.bounds
        return abs(self.area - (xmax - xmin) * (ymax - ymin)) <= 1e-12 * self.area

    def _feature_radius(self) -> float:
        pts = np.concatenate(self.loops)
        edges = self.edges()
        best = np.inf
        for i, p in enumerate(pts):
            a, b = edges[:, 0], edges[:, 1]
            incident = np.all(np.isclose(a, p), axis=1) | np.all(np.isclose(b, p), axis=1)
            d = _point_segment_distance(p[None, :], a[~incident], b[~incident])
            if d.size:
                best = min(best, float(d.min()))
        return 0.5 * best

    # queries ----------------------------------------------------------
    def classify(self, pts) -> np.ndarray:
        pts = _as_points(pts)
        tol = BOUNDARY_RTOL * self.diameter
        inside = shapely.contains_xy(self._poly, pts[:, 0], pts[:, 1])
        out = np.where(inside, INSIDE, OUTSIDE)
        near = self.boundary_distance(pts) <= tol
        out[near] = BOUNDARY
        return out

    def boundary_distance(self, pts) -> np.ndarray:
        pts = _as_points(pts)
        return shapely.distance(self._poly.boundary, shapely.points(pts))

    def signed_distance(self, pts) -> np.ndarray:
        """Distance to the boundary, positive inside."""
        pts = _as_points(pts)
        d = self.boundary_distance(pts)
        inside = shapely.contains_xy(self._poly, pts[:, 0], pts[:, 1])
        return np.where(inside, d, -d)

    def coarse_cells(self) -> np.ndarray:
        cells = getattr(self, "_coarse", None)
        if cells is None:
            from .meshing import constrained_triangulation

            verts, tris = constrained_triangulation(self)
            cells = orient_ccw(verts[tris])
            object.__setattr__(self, "_coarse", cells)
        return cells

    def cells_near(self, center, radius) -> np.ndarray:
        cells = self.coarse_cells()
        c = np.asarray(center, dtype=float)[:2]
        lo = cells.min(axis=1)
        hi = cells.max(axis=1)
        hit = np.all((lo <= c + radius) & (hi >= c - radius), axis=1)
        return cells[hit]

    # io ---------------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "loops": [l.tolist() for l in self.loops],
            "patches": [p.to_json() for p in self.patches],
            "r0": self.r0,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PolygonDomain":
        patches = [LipschitzPatch.from_json(p) for p in data.get("patches", [])]
        return cls(data["loops"], patches, 0.0, float(data.get("r0") or 0.0))


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points ``p`` (N,2) to segments ``a``-``b`` (E,2): shape (N,E)."""
    ab = b - a
    ap = p[:, None, :] - a[None, :, :]
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    t = np.clip(np.sum(ap * ab[None], axis=2) / denom, 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - proj, axis=2)


# ---------------------------------------------------------------------------
# unbounded model domains


@dataclass(frozen=True)
class Plane:
    """The whole plane; used for harmonic test fields."""

    diameter: float = math.inf

    def classify(self, pts) -> np.ndarray:
        return np.full(_as_points(pts).shape[0], INSIDE)

    def cells_near(self, center, radius) -> np.ndarray:
        # one triangle with inradius 1.5 * radius around the center
        c = np.asarray(center, dtype=float)[:2]
        R = 3.0 * radius
        th = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
        return orient_ccw((c + R * np.column_stack([np.cos(th), np.sin(th)]))[None])

    def boundary_distance(self, pts) -> np.ndarray:
        return np.full(_as_points(pts).shape[0], np.inf)


@dataclass(frozen=True)
class HalfPlane:
    """The half-plane ``{y > 0}``, the flat model boundary domain."""

    diameter: float = math.inf

    def classify(self, pts) -> np.ndarray:
        y = _as_points(pts)[:, 1]
        return np.where(y > 0, INSIDE, np.where(y == 0, BOUNDARY, OUTSIDE))

    def cells_near(self, center, radius) -> np.ndarray:
        cx, cy = np.asarray(center, dtype=float)[:2]
        top = cy + radius
        if top <= 0:
            return np.zeros((0, 3, 2))
        bottom = max(cy - radius, 0.0)
        return orient_ccw(_bbox_triangles(cx - radius, bottom, cx + radius, top))

    def boundary_distance(self, pts) -> np.ndarray:
        return np.abs(_as_points(pts)[:, 1])


@dataclass(frozen=True)
class Strip:
    """The strip ``(a, b) x R``; domain of extensions of interval modes."""

    a: float = 0.0
    b: float = 1.0

    @property
    def diameter(self) -> float:
        return math.inf

    def classify(self, pts) -> np.ndarray:
        x = _as_points(pts)[:, 0]
        tol = BOUNDARY_RTOL * (self.b - self.a)
        return np.where((x > self.a + tol) & (x < self.b - tol), INSIDE,
                        np.where((x >= self.a - tol) & (x <= self.b + tol), BOUNDARY, OUTSIDE))

    def cells_near(self, center, radius) -> np.ndarray:
        cx, cy = np.asarray(center, dtype=float)[:2]
        lo, hi = max(cx - radius, self.a), min(cx + radius, self.b)
        if lo >= hi:
            return np.zeros((0, 3, 2))
        return orient_ccw(_bbox_triangles(lo, cy - radius, hi, cy + radius))

    def boundary_distance(self, pts) -> np.ndarray:
        x = _as_points(pts)[:, 0]
        return np.minimum(np.abs(x - self.a), np.abs(x - self.b))


@dataclass(frozen=True, eq=False)
class Cylinder:
    """Product ``base x R`` used by three-dimensional harmonic extensions."""

    base: object

    @property
    def diameter(self) -> float:
        return math.inf

    def classify(self, pts) -> np.ndarray:
        return self.base.classify(_as_points(pts)[:, :2])


def classify(domain, pt) -> str:
    """Classify one point as ``'inside'``, ``'boundary'`` or ``'outside'``."""
    return _LABELS[int(domain.classify(np.asarray(pt, dtype=float)[None, :])[0])]


contains = classify


# ---------------------------------------------------------------------------
# triangle / disk clipping


@dataclass
class ClipResult:
    """Intersection of a triangle with a disk.

    ``vertices`` traces the boundary of the (convex) intersection in
    counter-clockwise order; ``arcs[i]`` is true when the piece from
    ``vertices[i]`` to ``vertices[i+1]`` runs along the circle.
    ``area`` is the polygon area plus the circular-segment corrections.
    """

    area: float
    vertices: np.ndarray
    arcs: np.ndarray
    full_disk: bool = False


def _segment_circle_params(p, q, c, r):
    d = q - p
    f = p - c
    a = d @ d
    b = 2 * f @ d
    cc = f @ f - r * r
    disc = b * b - 4 * a * cc
    if disc <= 0 or a == 0:
        return []
    sq = math.sqrt(disc)
    ts = sorted({(-b - sq) / (2 * a), (-b + sq) / (2 * a)})
    return [t for t in ts if 0.0 < t < 1.0]


def clip_cell(triangle, ball: Ball) -> ClipResult:
    """Exact area of ``triangle`` intersected with the disk ``ball``."""
    tri = orient_ccw(np.asarray(triangle, dtype=float)[None])[0]
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    if abs(e1[0] * e2[1] - e1[1] * e2[0]) <= 1e-300:
        raise GeometryError("degenerate triangle")
    c = np.asarray(ball.center[:2])
    r = ball.radius
    dist = np.linalg.norm(tri - c, axis=1)
    inside = dist <= r
    # vertices on the circle can start or end an arc like edge crossings
    touching = np.abs(dist - r) <= 1e-12 * r

    # boundary walk: triangle vertices inside the disk and edge crossings
    pts, on_circle = [], []
    for i in range(3):
        p, q = tri[i], tri[(i + 1) % 3]
        if inside[i]:
            pts.append(p)
            on_circle.append(bool(touching[i]))
        for t in _segment_circle_params(p, q, c, r):
            pts.append(p + t * (q - p))
            on_circle.append(True)

    # does the disk center lie inside the triangle, far from its edges?
    normals = np.array([[-(tri[(i + 1) % 3] - tri[i])[1], (tri[(i + 1) % 3] - tri[i])[0]]
                        for i in range(3)])
    lengths = np.linalg.norm(normals, axis=1)
    dist_to_lines = np.array([(c - tri[i]) @ normals[i] for i in range(3)]) / lengths

    if not pts:
        if np.all(dist_to_lines >= r):
            return ClipResult(math.pi * r * r, np.zeros((0, 2)), np.zeros(0, bool), True)
        return ClipResult(0.0, np.zeros((0, 2)), np.zeros(0, bool))

    pts = np.array(pts)
    on_circle = np.array(on_circle)
    n = len(pts)
    arcs = np.zeros(n, dtype=bool)
    area = _signed_area(pts) if n >= 3 else 0.0
    for i in range(n):
        j = (i + 1) % n
        if on_circle[i] and on_circle[j]:
            # leaving the triangle at i and re-entering at j: decide whether
            # the boundary between them follows an edge or the circle
            a0 = math.atan2(*(pts[i] - c)[::-1])
            a1 = math.atan2(*(pts[j] - c)[::-1])
            sweep = (a1 - a0) % (2 * math.pi)
            if n == 2 and sweep == 0:
                continue
            mid = c + r * np.array([math.cos(a0 + sweep / 2), math.sin(a0 + sweep / 2)])
            if np.all(((mid - tri) * normals).sum(axis=1) >= -1e-14 * r * lengths):
                arcs[i] = True
                area += 0.5 * r * r * (sweep - math.sin(sweep))
    return ClipResult(float(area), pts, arcs)


# ---------------------------------------------------------------------------
# star-shapedness


@dataclass
class StarShapeReport:
    holds: bool
    witness: tuple | None
    lifted_point: np.ndarray
    pairs_checked: int


def star_shaped_check(patch: LipschitzPatch, x0, samples: int = 10_000,
                      subdivisions: int = 64, lift: bool = True,
                      seed: int = 0) -> StarShapeReport:
    """Test whether the domain inside ``B(x1, r/2)`` is star-shaped from ``x1``.

    ``x1 = x0 + tau * r * e`` with ``e`` the inward patch normal; with
    ``lift=False`` the point ``x0`` itself is used. Segment endpoints are
    drawn just above the graph (the critical pairs), at all graph
    vertices in range, and uniformly in the region.
    """
    if patch.tau >= 0.25:
        raise PreconditionError("star-shapedness test requires tau < 1/4")
    if samples < 1000:
        raise PreconditionError("use at least 1000 samples")
    r = patch.radius
    x0 = np.asarray(x0, dtype=float)
    if np.linalg.norm(x0 - np.array(patch.center)) > r / 4 * (1 + 1e-12):
        raise PreconditionError("x0 must lie in the quarter ball")
    if patch.classify(x0[None])[0] == OUTSIDE:
        raise PreconditionError("x0 must lie in the closure of the domain")
    x1 = x0 + (patch.tau * r * patch.normal if lift else 0.0)
    l1 = patch.to_local(x1)[0]
    rad = r / 2
    rng = np.random.default_rng(seed)
    scale = 1e-9 * r

    # candidate far endpoints in local coordinates
    ys = patch.abscissae()
    verts = ys[np.abs(ys - l1[0]) < rad]
    n_graph = samples // 2
    g1 = np.concatenate([verts, l1[0] + rad * (2 * rng.random(n_graph) - 1)])
    graph_pts = np.column_stack([g1, patch.f(g1) + scale])
    n_bulk = samples - n_graph
    ang = 2 * np.pi * rng.random(n_bulk)
    rr = rad * np.sqrt(rng.random(n_bulk))
    bulk = l1 + np.column_stack([rr * np.cos(ang), rr * np.sin(ang)])
    far = np.vstack([graph_pts, bulk])
    keep = np.linalg.norm(far - l1, axis=1) < rad
    keep &= far[:, 1] - patch.f(far[:, 0]) > 0
    keep &= np.abs(far[:, 0]) <= r
    far = far[keep]

    ts = np.arange(1, subdivisions + 1) / (subdivisions + 1)
    for start in range(0, len(far), 2000):
        chunk = far[start:start + 2000]
        seg = l1[None, None, :] + ts[None, :, None] * (chunk[:, None, :] - l1[None, None, :])
        gap = seg[..., 1] - patch.f(seg[..., 0])
        bad = gap <= 0
        # exact check at graph vertices crossed by each segment
        lo = np.minimum(l1[0], chunk[:, 0])
        hi = np.maximum(l1[0], chunk[:, 0])
        mask = (ys[None, :] > lo[:, None]) & (ys[None, :] < hi[:, None])
        dx = chunk[:, 0] - l1[0]
        # entries with tiny dx are masked out, so overflow there is harmless
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            tv = (ys[None, :] - l1[0]) / dx[:, None]
            height = l1[1] + tv * (chunk[:, 1] - l1[1])[:, None]
        vbad = mask & (height <= patch.samples[None, :])
        row_bad = bad.any(axis=1) | vbad.any(axis=1)
        if row_bad.any():
            i = int(np.argmax(row_bad))
            wit = (x1.copy(), patch.to_world(chunk[i])[0])
            return StarShapeReport(False, wit, x1, start + i + 1)
    return StarShapeReport(True, None, x1, len(far))


# ---------------------------------------------------------------------------
# the standard construction


@dataclass
class StandardConstruction:
    cube: Cube
    k: int
    boundary_cubes: list
    inner_cubes: list
    columns: list
    separation: float = INNER_CUBE_SEPARATION

    def all_cubes(self) -> list:
        return list(self.boundary_cubes) + list(self.inner_cubes)

    def to_json(self) -> dict:
        def enc(q):
            return {"center": list(q.center), "side": q.side, "angle": q.angle}

        return {
            "cube": enc(self.cube),
            "k": self.k,
            "boundary_cubes": [enc(q) for q in self.boundary_cubes],
            "inner_cubes": [enc(q) for q in self.inner_cubes],
            "columns": self.columns,
        }


def _bisect_graph(patch: LipschitzPatch, y1: float, lo: float, hi: float,
                  tol: float) -> float:
    """Height where the vertical line at ``y1`` crosses the graph."""
    target = float(patch.f(y1))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - target > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def standard_construction(patch: LipschitzPatch, cube: Cube, k: int) -> StandardConstruction:
    """Split a boundary square into boundary squares and inner squares.

    ``cube.center`` must lie on the graph; the cube is taken in the
    patch frame. Columns are the ``2**k`` vertical strips of width
    ``s / 2**k``; in each column the boundary square is centered on the
    graph and inner squares are stacked up to the top face.
    """
    if k < 3:
        raise PreconditionError("k must be at least 3")
    limit = 1.0 / (16 * math.sqrt(2))
    if patch.tau >= limit:
        import warnings

        warnings.warn(f"tau = {patch.tau:.4g} is not below {limit:.4g}; "
                      "geometric conditions are checked directly", stacklevel=2)
    s = cube.side
    xq = patch.to_local(np.asarray(cube.center))[0]
    if abs(xq[1] - patch.f(xq[0])) > 1e-9 * s:
        raise GeometryError("cube center must lie on the boundary graph")
    half = s / 2
    if abs(xq[0]) + half > patch.radius or np.hypot(abs(xq[0]) + half, abs(xq[1]) + half) > patch.radius:
        raise PreconditionError("cube must lie inside the patch ball")
    ys = np.linspace(xq[0] - half, xq[0] + half, 4097)
    ys = np.union1d(ys, patch.abscissae()[np.abs(patch.abscissae() - xq[0]) <= half])
    dev = np.abs(patch.f(ys) - xq[1])
    if dev.max() >= half:
        raise GeometryError("boundary meets a horizontal face of the cube")
    if dev.max() >= s / 4:
        raise GeometryError("boundary leaves the middle slab of the cube")

    n = 2**k
    sigma = s / n
    top = xq[1] + half
    frame_angle = patch.angle
    boundary, inner, columns = [], [], []
    for i in range(n):
        y1 = xq[0] - half + (i + 0.5) * sigma
        h = _bisect_graph(patch, y1, xq[1] - half, xq[1] + half, 1e-13 * s)
        q_center = patch.to_world([[y1, h]])[0]
        boundary.append(Cube(tuple(q_center), sigma, frame_angle))
        bottom = h + sigma / 2
        heights = []
        while bottom < top - 1e-12 * s:
            c2 = min(bottom + sigma / 2, top - sigma / 2)
            heights.append(c2)
            bottom += sigma
        col = []
        for c2 in heights:
            p = Cube(tuple(patch.to_world([[y1, c2]])[0]), sigma, frame_angle)
            inner.append(p)
            col.append(len(inner) - 1)
        if len(col) > n:
            raise GeometryError("too many inner cubes in a column")
        columns.append({"boundary": i, "inner": col, "residual": abs(h - patch.f(y1))})
    construction = StandardConstruction(cube, k, boundary, inner, columns)
    _validate_construction(patch, construction)
    return construction


def _validate_construction(patch: LipschitzPatch, sc: StandardConstruction) -> None:
    ys = patch.abscissae()
    graph = LineString(patch.to_world(np.column_stack([ys, patch.samples])))
    for p in sc.inner_cubes:
        if graph.distance(p.polygon()) <= sc.separation * p.side:
            raise GeometryError("inner cube too close to the boundary")
    for col in sc.columns:
        if col["residual"] >= 1e-10 * sc.cube.side:
            raise GeometryError("boundary cube center is off the graph")


def construction_coverage(patch: LipschitzPatch, sc: StandardConstruction,
                          n_points: int = 100_000, seed: int = 0) -> float:
    """Fraction of sampled points of the domain inside Q not covered by any cube."""
    from scipy.stats import qmc

    u = qmc.Sobol(2, seed=seed).random_base2(max(1, math.ceil(math.log2(n_points))))
    n_points = len(u)
    Q = sc.cube
    local = (u - 0.5) * Q.side
    pts = local @ rotation(Q.angle).T + np.array(Q.center)
    dom = patch.classify(pts) == INSIDE
    covered = np.zeros(n_points, dtype=bool)
    for q in sc.all_cubes():
        covered |= q.contains(pts, tol=1e-12 * Q.side)
    return float(np.sum(dom & ~covered)) / n_points
