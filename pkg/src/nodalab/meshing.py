"""Conforming triangle meshes of polygon domains.

Meshes are generated with the ``triangle`` library (constrained Delaunay
with a minimum angle and a maximum area), then checked for conformity,
orientation, angle quality and realized edge length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import triangle as tr
from shapely.geometry import Polygon

from .geometry import GeometryError, PolygonDomain

MIN_ANGLE_DEG = 20.0


class MeshError(ValueError):
    """Mesh generation failed or a mesh violates its invariants."""


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex: np.ndarray
    h_max: float = field(default=0.0)
    domain: PolygonDomain | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        b = np.asarray(self.boundary_vertex, dtype=bool)
        for a in (v, t, b):
            a.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary_vertex", b)
        object.__setattr__(self, "h_max", float(edge_lengths(v, t).max()))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    def min_angle(self) -> float:
        """Smallest interior angle in degrees."""
        return float(np.degrees(triangle_angles(self.vertices, self.triangles).min()))

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted edges and the number of triangles sharing each."""
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]],
                            self.triangles[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def validate(self, min_angle: float = MIN_ANGLE_DEG) -> None:
        if np.any(self.areas() <= 0):
            raise MeshError("triangle with non-positive signed area")
        _, counts = self.edges()
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: edge shared by more than two triangles")
        if self.min_angle() < min_angle - 1e-9:
            raise MeshError(f"minimum angle {self.min_angle():.2f} below {min_angle}")
        uniq, counts = self.edges()
        bedges = uniq[counts == 1]
        if not np.all(self.boundary_vertex[bedges]):
            raise MeshError("boundary edge with a vertex not flagged as boundary")

    def to_json(self) -> dict:
        data = {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary": self.boundary_vertex.astype(int).tolist(),
        }
        if self.domain is not None:
            data["domain"] = self.domain.to_json()
        return data

    @classmethod
    def from_json(cls, data: dict, domain: PolygonDomain | None = None) -> "TriangleMesh":
        try:
            if domain is None and data.get("domain") is not None:
                domain = PolygonDomain.from_json(data["domain"])
            return cls(np.array(data["vertices"], float), np.array(data["triangles"], int),
                       np.array(data["boundary"], bool), domain=domain)
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"malformed mesh data: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "TriangleMesh":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def edge_lengths(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    return np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)


def triangle_angles(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    out = np.empty(triangles.shape, dtype=float)
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cosang = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out[:, i] = np.arccos(np.clip(cosang, -1.0, 1.0))
    return out


def _pslg(domain: PolygonDomain, h: float | None) -> dict:
    """Vertices and segments of the domain boundary, edges pre-split to length <= h."""
    verts, segs, holes = [], [], []
    for li, loop in enumerate(domain.loops):
        start = len(verts)
        n = len(loop)
        for i in range(n):
            p, q = loop[i], loop[(i + 1) % n]
            pieces = 1 if h is None else max(1, math.ceil(np.linalg.norm(q - p) / h - 1e-9))
            for j in range(pieces):
                verts.append(p + (q - p) * j / pieces)
        m = len(verts) - start
        segs.extend([start + i, start + (i + 1) % m] for i in range(m))
        if li > 0:
            rp = Polygon(loop).representative_point()
            holes.append([rp.x, rp.y])
    data = {"vertices": np.array(verts), "segments": np.array(segs, dtype=np.int32)}
    if holes:
        data["holes"] = np.array(holes)
    return data


def constrained_triangulation(domain: PolygonDomain) -> tuple[np.ndarray, np.ndarray]:
    """Coarse triangulation using only the polygon vertices."""
    out = tr.triangulate(_pslg(domain, None), "pQ")
    return out["vertices"], out["triangles"]


def _flag_boundary(domain: PolygonDomain, vertices: np.ndarray) -> np.ndarray:
    return domain.boundary_distance(vertices) <= 1e-10 * domain.diameter


def triangulate(domain: PolygonDomain, h_target: float, grade_reentrant: bool = True) -> TriangleMesh:
    """Quality mesh with realized maximum edge length at most ``1.5 * h_target``.

    Triangles touching a reentrant corner are refined two extra levels
    (area divided by 16).
    """
    if not h_target > 0:
        raise MeshError("mesh size must be positive")
    if h_target >= domain.diameter:
        raise MeshError("mesh size must be below the domain diameter")
    pslg = _pslg(domain, h_target)
    area = 0.8 * math.sqrt(3) / 4 * h_target**2
    for _ in range(6):
        try:
            out = tr.triangulate(pslg, f"pq28a{area:.17f}Q")
        except Exception as exc:  # triangle raises bare RuntimeError on bad input
            raise MeshError(f"triangulation failed: {exc}") from exc
        verts, tris = out["vertices"], out["triangles"]
        if grade_reentrant and len(domain.reentrant_vertices()):
            verts, tris = _grade(domain, out, area)
        if edge_lengths(verts, tris).max() <= 1.5 * h_target:
            break
        area *= 0.7
    else:
        raise MeshError("could not reach the requested mesh size")
    tris = _orient(verts, tris)
    mesh = TriangleMesh(verts, tris, _flag_boundary(domain, verts), domain=domain)
    mesh.validate()
    return mesh


def _grade(domain: PolygonDomain, out: dict, area: float) -> tuple[np.ndarray, np.ndarray]:
    corners = domain.reentrant_vertices()
    current = dict(out)
    for _level in range(2):
        verts, tris = current["vertices"], current["triangles"]
        d = np.linalg.norm(verts[:, None, :] - corners[None, :, :], axis=2)
        at_corner = np.any(d <= 1e-12 * domain.diameter, axis=1)
        touching = np.any(at_corner[tris], axis=1)
        areas = np.abs(signed_areas(verts, tris))
        limits = np.where(touching, areas / 4, max(area, areas.max()))
        current = tr.triangulate({**current, "triangle_max_area": limits}, "rpq28aQ")
    return current["vertices"], current["triangles"]


def _orient(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    tris = np.array(triangles, dtype=np.int64)
    flip = signed_areas(vertices, tris) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def refine(mesh: TriangleMesh) -> TriangleMesh:
    """Uniform red refinement: every triangle split into four similar ones."""
    v, t = mesh.vertices, mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, inverse, counts = np.unique(es, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    mids = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    on_boundary = counts == 1
    if mesh.domain is not None and on_boundary.any():
        mids[on_boundary] = _project_to_boundary(mesh.domain, mids[on_boundary])
    nv = v.shape[0]
    new_v = np.vstack([v, mids])
    m = inverse.reshape(3, -1).T + nv  # midpoints of edges 01, 12, 20
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
    new_t = np.concatenate([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ])
    bflag = np.concatenate([mesh.boundary_vertex, on_boundary])
    return TriangleMesh(new_v, new_t, bflag, domain=mesh.domain)


def _project_to_boundary(domain: PolygonDomain, pts: np.ndarray) -> np.ndarray:
    edges = domain.edges()
    a, b = edges[:, 0], edges[:, 1]
    ab = b - a
    ap = pts[:, None, :] - a[None]
    t = np.clip(np.sum(ap * ab[None], axis=2) / np.sum(ab * ab, axis=1), 0, 1)
    proj = a[None] + t[..., None] * ab[None]
    d = np.linalg.norm(proj - pts[:, None, :], axis=2)
    idx = np.argmin(d, axis=1)
    return proj[np.arange(len(pts)), idx]


def load_domain(path) -> PolygonDomain:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        return PolygonDomain.from_json(data)
    except (KeyError, TypeError) as exc:
        raise GeometryError(f"malformed domain file: {exc}") from exc
