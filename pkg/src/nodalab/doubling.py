"""Masses, doubling indices, maximal doubling indices and chains of balls.

``H(x, r)`` is the integral of ``h^2`` over ``B(x, r)`` intersected with
the domain and ``N(x, r) = ln(H(x, 2r) / H(x, r))``. For harmonic
extensions of planar eigenfunctions the ``t``-integral over each fiber
of the three-dimensional ball is done in closed form, leaving a planar
integral with the weight ``exp(2 k t0) sinh(2 k s) / k``,
``s = sqrt(r^2 - |x - x0|^2)``, ``k = sqrt(lam)``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import shapely
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path
from scipy.spatial import cKDTree
from shapely.geometry import LineString

from .fields import ExtensionField, FEMField, ScalarField, _ascend
from .geometry import (BOUNDARY, INSIDE, OUTSIDE, Ball, Cube, Cylinder, GeometryError,
                       HalfPlane, LipschitzPatch, PolygonDomain, PreconditionError, rotation)
from .quadrature import collapsed_rule, integrate_disk_cells, triangle_rule

MASS_RTOL = 1e-5


class DoublingError(ValueError):
    """Mass too small to form a doubling index, or an invalid request."""


class ChainError(RuntimeError):
    """Chain-of-balls construction failed."""


@dataclass
class MassResult:
    values: np.ndarray
    errors: np.ndarray
    converged: np.ndarray


def _planar_setup(field: ScalarField, domain):
    """Planar field, planar domain, and the fiber weight if any."""
    if isinstance(field, ExtensionField) and field.base.dim == 2:
        base_domain = domain.base if isinstance(domain, Cylinder) else (domain or field.domain.base)
        kappa = field.kappa

        def weight(s):
            return np.sinh(2 * kappa * s) / kappa

        return field.base, base_domain, weight, kappa
    return field, domain if domain is not None else field.domain, None, 0.0


def masses(field: ScalarField, centers, radii, domain=None, rtol: float = MASS_RTOL) -> MassResult:
    """Masses ``H`` for many balls at once.

    ``centers`` has shape (B, d) with d = 2, or d = 3 for extensions of
    planar fields; ``radii`` has shape (B,).
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),)).copy()
    if np.any(radii <= 0):
        raise DoublingError("radii must be positive")
    planar, pdomain, weight, kappa = _planar_setup(field, domain)
    c2 = centers[:, :2]
    B = len(centers)

    def integrand(pts, ids):
        v = planar.local_eval(pts, ids)
        return v * v

    if isinstance(planar, FEMField):
        res = _fem_masses(planar, c2, radii, integrand, weight, rtol)
    else:
        cells, owner = [], []
        for b in range(B):
            cb = pdomain.cells_near(c2[b], radii[b])
            cells.append(cb)
            owner.append(np.full(len(cb), b))
        cells = np.concatenate(cells) if cells else np.zeros((0, 3, 2))
        owner = np.concatenate(owner).astype(np.int64)
        r = integrate_disk_cells(cells, c2[owner], radii[owner], owner, B, integrand,
                                 radial_weight=weight, rtol=rtol)
        res = MassResult(r.values, r.errors, r.converged)
    if weight is not None:
        factor = np.exp(2 * kappa * centers[:, 2])
        res = MassResult(res.values * factor, res.errors * factor, res.converged)
    return res


def _fem_masses(field: FEMField, centers, radii, integrand, weight, rtol) -> MassResult:
    mesh = field.mesh
    cells = mesh.vertices[mesh.triangles]
    cent = cells.mean(axis=1)
    circ = np.max(np.linalg.norm(cells - cent[:, None, :], axis=2), axis=1)
    tree = cKDTree(cent)
    reach = circ.max()
    B = len(centers)
    inner_val = np.zeros(B)
    inner_err = np.zeros(B)
    pair_cells, pair_owner = [], []
    for b in range(B):
        c, R = centers[b], radii[b]
        cand = np.array(tree.query_ball_point(c, R + reach), dtype=np.int64)
        if not cand.size:
            continue
        d = np.linalg.norm(cells[cand] - c, axis=2)
        full = np.all(d <= R, axis=1)
        near = np.linalg.norm(cent[cand] - c, axis=1) <= R + circ[cand]
        cross = near & ~full
        ids = cand[full]
        if ids.size:
            if weight is None:
                inner_val[b] = np.sum(triangle_rule(cells[ids], integrand, ids))
            else:
                def wint(pts, cid, c=c, R=R):
                    s = np.sqrt(np.maximum(R * R - np.sum((pts - c) ** 2, axis=-1), 0.0))
                    return integrand(pts, cid) * weight(s)

                hi = np.sum(collapsed_rule(cells[ids], wint, 8, ids))
                lo = np.sum(collapsed_rule(cells[ids], wint, 6, ids))
                inner_val[b], inner_err[b] = hi, abs(hi - lo)
        pair_cells.append(cand[cross])
        pair_owner.append(np.full(int(cross.sum()), b))
    ids = np.concatenate(pair_cells) if pair_cells else np.zeros(0, np.int64)
    owner = np.concatenate(pair_owner).astype(np.int64) if pair_owner else np.zeros(0, np.int64)
    r = integrate_disk_cells(cells[ids], centers[owner], radii[owner], owner, B, integrand,
                             cell_ids=ids, radial_weight=weight, rtol=rtol)
    vals = r.values + inner_val
    errs = r.errors + inner_err
    return MassResult(vals, errs, errs <= rtol * np.abs(vals) * (1 + 1e-9))


def mass(field: ScalarField, ball: Ball, domain=None, rtol: float = MASS_RTOL) -> tuple[float, float]:
    """Mass ``H`` over one ball and its error estimate."""
    r = masses(field, np.array([ball.center]), np.array([ball.radius]), domain, rtol)
    if not r.converged[0]:
        warnings.warn(f"mass tolerance not reached (error {r.errors[0]:.3g})", stacklevel=2)
    return float(r.values[0]), float(r.errors[0])


@dataclass
class DoublingValues:
    N: np.ndarray
    error: np.ndarray
    H_small: np.ndarray
    H_large: np.ndarray


def doubling_indices(field: ScalarField, centers, radii, domain=None,
                     rtol: float = MASS_RTOL) -> DoublingValues:
    """``N`` at many (center, radius) pairs, with absolute error estimates."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
    both = masses(field, np.vstack([centers, centers]), np.concatenate([radii, 2 * radii]),
                  domain, rtol)
    n = len(centers)
    h1, h2 = both.values[:n], both.values[n:]
    e1, e2 = both.errors[:n], both.errors[n:]
    floor = 1e-300 * max(field.scale, 1e-150) ** 2
    if np.any(h1 <= floor):
        raise DoublingError("mass vanishes on the ball; the doubling index is undefined")
    N = np.log(h2 / h1)
    err = e1 / h1 + e2 / h2
    return DoublingValues(N, err, h1, h2)


def doubling_index(field: ScalarField, center, r: float, domain=None) -> float:
    """``N(center, r) = ln(H(2r) / H(r))``."""
    return float(doubling_indices(field, [center], [r], domain).N[0])


@dataclass
class DoublingReport:
    center: np.ndarray
    radii: np.ndarray
    H_values: np.ndarray
    N_values: np.ndarray
    quad_error: np.ndarray

    def write_csv(self, path) -> None:
        c = list(self.center) + [0.0] * (3 - len(self.center))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["center_x", "center_y", "center_t", "r", "H", "N", "err"])
            for r, H, N, e in zip(self.radii, self.H_values, self.N_values, self.quad_error):
                w.writerow([repr(float(c[0])), repr(float(c[1])), repr(float(c[2])),
                            repr(float(r)), repr(float(H)), repr(float(N)), repr(float(e))])


def doubling_profile(field: ScalarField, center, r_min: float, r_max: float, steps: int,
                     domain=None) -> DoublingReport:
    """Doubling index at ``steps`` geometrically spaced radii."""
    if not 0 < r_min < r_max:
        raise DoublingError("need 0 < r_min < r_max")
    if steps < 2:
        raise DoublingError("need at least two radii")
    radii = np.geomspace(r_min, r_max, steps)
    c = np.asarray(center, dtype=float)
    dv = doubling_indices(field, np.tile(c, (steps, 1)), radii, domain)
    return DoublingReport(c, radii, dv.H_small, dv.N, dv.error)


# ---------------------------------------------------------------------------
# maximal doubling index


@dataclass
class MaxDoubling:
    value: float
    center: np.ndarray
    radius: float
    error: float
    evaluations: int


def _cube_candidates(Q: Cube, domain, grid: int) -> np.ndarray:
    u = np.linspace(-0.5, 0.5, grid)
    U, V = np.meshgrid(u, u, indexing="ij")
    local = np.column_stack([U.ravel(), V.ravel()]) * Q.side
    pts = local @ rotation(Q.angle).T + np.array(Q.center)
    pts = pts[domain.classify(pts) != OUTSIDE]
    # boundary points inside Q matter: the supremum is often attained there
    if isinstance(domain, LipschitzPatch):
        xq = domain.to_local(np.array(Q.center))[0]
        bp = domain.boundary_point(xq[0] + u * Q.side)
    elif isinstance(domain, HalfPlane):
        bp = np.column_stack([Q.center[0] + u * Q.side, np.zeros_like(u)])
    else:
        return pts
    return np.vstack([pts, bp[Q.contains(bp, 1e-12 * Q.side)]])


def _project_to_closure(domain, Q: Cube, pts: np.ndarray) -> np.ndarray:
    """Pull points back into ``Q`` and onto the closed domain."""
    loc = Q.to_local(pts)
    loc = np.clip(loc, -Q.side / 2, Q.side / 2)
    pts = loc @ rotation(Q.angle).T + np.array(Q.center)
    if isinstance(domain, LipschitzPatch):
        l = domain.to_local(pts)
        l[:, 1] = np.maximum(l[:, 1], domain.f(l[:, 0]))
        pts = domain.to_world(l)
    elif isinstance(domain, HalfPlane):
        pts[:, 1] = np.maximum(pts[:, 1], 0.0)
    return pts


def max_doubling(field: ScalarField, Q: Cube, domain=None, grid: int = 17, n_radii: int = 9,
                 rounds: int = 3, governing_patch: LipschitzPatch | None = None) -> MaxDoubling:
    """Supremum of ``N(x, r)`` over ``x`` in ``Q`` (closed domain) and ``r`` in ``[l/2, l]``.

    Grid search over centers and radii followed by ``rounds`` of local
    compass refinement in ``(x, r)`` from the best grid points.
    """
    domain = domain if domain is not None else field.domain
    patch = governing_patch if governing_patch is not None else (
        domain if isinstance(domain, LipschitzPatch) else None)
    if patch is not None:
        far = np.linalg.norm(Q.corners() - np.array(patch.center), axis=1).max()
        if far > patch.radius / 32 * (1 + 1e-9):
            raise PreconditionError("cube must lie in the 1/32 ball of its patch")
    ell = Q.diam
    pts = _cube_candidates(Q, domain, grid)
    if not len(pts):
        raise GeometryError("cube does not meet the closed domain")
    radii = np.linspace(ell / 2, ell, n_radii)
    C = np.repeat(pts, n_radii, axis=0)
    R = np.tile(radii, len(pts))
    dv = doubling_indices(field, C, R, domain)
    evals = len(C)
    order = np.argsort(-dv.N, kind="stable")[:4]
    best_c, best_r = C[order].copy(), R[order].copy()
    best_n, best_e = dv.N[order].copy(), dv.error[order].copy()
    step_x = Q.side / max(grid - 1, 1)
    step_r = (radii[1] - radii[0]) if n_radii > 1 else ell / 4
    moves = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
                      [1, 1, 0], [1, -1, 0], [-1, 1, 0], [-1, -1, 0]], float)
    for _ in range(rounds):
        step_x *= 0.5
        step_r *= 0.5
        for _inner in range(4):
            cand_c = (best_c[:, None, :] + moves[None, :, :2] * step_x).reshape(-1, 2)
            cand_c = _project_to_closure(domain, Q, cand_c)
            cand_r = np.clip((best_r[:, None] + moves[None, :, 2] * step_r).ravel(), ell / 2, ell)
            d2 = doubling_indices(field, cand_c, cand_r, domain)
            evals += len(cand_c)
            vals = d2.N.reshape(len(best_c), -1)
            j = np.argmax(vals, axis=1)
            gain = vals[np.arange(len(j)), j]
            better = gain > best_n
            if not better.any():
                break
            flat = np.arange(len(j)) * len(moves) + j
            best_c[better] = cand_c[flat[better]]
            best_r[better] = cand_r[flat[better]]
            best_n[better] = gain[better]
            best_e[better] = d2.error.reshape(len(best_c), -1)[np.arange(len(j)), j][better]
    i = int(np.argmax(best_n))
    return MaxDoubling(float(best_n[i]), best_c[i], float(best_r[i]), float(best_e[i]), evals)


# ---------------------------------------------------------------------------
# chain of balls


@dataclass
class ChainReport:
    balls: list
    net: np.ndarray
    steps: int
    path: np.ndarray
    maximizer: np.ndarray
    path_params: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.balls])

    def invariants(self, r: float) -> dict:
        c = self.centers
        gaps = np.linalg.norm(np.diff(c, axis=0), axis=1) if len(c) > 1 else np.zeros(0)
        # B_{j+1} inside (3/2) B_j  <=>  |y_j - y_{j+1}| + r/2 <= 3r/4
        nested = bool(np.all(gaps + r / 2 <= 0.75 * r * (1 + 1e-12)))
        return {
            "step_below_quarter": bool(np.all(gaps < r / 4)),
            "nested": nested,
            "count_bound": self.steps <= len(self.net) + 2,
            "balls_bound": len(self.balls) <= len(self.net) + 2,
            "max_gap": float(gaps.max()) if gaps.size else 0.0,
        }


def build_net(domain: PolygonDomain, radius: float, seed: int = 0, spacing: float | None = None) -> np.ndarray:
    """Greedy ``radius``-net of the closed polygon.

    Candidates (a square grid of the given spacing plus boundary points at
    the same spacing) are visited in a seeded random order and kept when
    farther than ``radius - 1.25 spacing`` from every point kept so far.
    Every candidate is then within that distance of the net, and every
    point of the closed domain lies within ``1.25 spacing`` of a
    candidate, so the net covers the domain at distance below ``radius``.
    """
    spacing = spacing if spacing is not None else radius / 3
    xmin, ymin, xmax, ymax = domain.bounds
    xs = np.arange(xmin, xmax + spacing / 2, spacing)
    ys = np.arange(ymin, ymax + spacing / 2, spacing)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel()])
    grid = grid[domain.classify(grid) != OUTSIDE]
    bnd = []
    for e in domain.edges():
        m = max(2, int(np.ceil(np.linalg.norm(e[1] - e[0]) / spacing)) + 1)
        t = np.linspace(0, 1, m)[:, None]
        bnd.append(e[0] + t * (e[1] - e[0]))
    cand = np.vstack([grid] + bnd)
    target = radius - 1.25 * spacing
    if target <= 0:
        raise ChainError("net spacing too coarse for the requested radius")
    order = np.random.default_rng(seed).permutation(len(cand))
    keys = np.floor((cand - [xmin, ymin]) / target).astype(np.int64)
    buckets: dict = {}
    net = []
    t2 = target * target
    for i in order:
        kx, ky = keys[i]
        p = cand[i]
        ok = True
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for q in buckets.get((kx + dx, ky + dy), ()):
                    if (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 <= t2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            buckets.setdefault((kx, ky), []).append(p)
            net.append(i)
    return cand[np.sort(np.array(net))]


def _open_segment_inside(domain: PolygonDomain, a, b) -> bool:
    line = LineString([a, b])
    if line.length == 0:
        return domain.classify(np.asarray(a)[None])[0] != OUTSIDE
    rel = line.relate(domain.polygon)
    # interior of the segment must avoid the polygon boundary and exterior
    return rel[1] == "F" and rel[2] == "F"


def chain_path(domain: PolygonDomain, start, end) -> np.ndarray:
    """Polyline from ``start`` to ``end`` with its open part inside the domain."""
    start, end = np.asarray(start, float), np.asarray(end, float)
    if _open_segment_inside(domain, start, end):
        return np.array([start, end])
    # visibility graph over polygon vertices nudged into the interior
    nodes = [start, end]
    eps = 1e-6 * domain.diameter
    for loop in domain.loops:
        prev = np.roll(loop, 1, axis=0)
        nxt = np.roll(loop, -1, axis=0)
        for p, a, b in zip(loop, prev, nxt):
            u = (a - p) / np.linalg.norm(a - p) + (b - p) / np.linalg.norm(b - p)
            if np.linalg.norm(u) < 1e-12:
                u = np.array([-(b - p)[1], (b - p)[0]])
            u = u / np.linalg.norm(u)
            for cand in (p + eps * u, p - eps * u):
                if domain.classify(cand[None])[0] == INSIDE:
                    nodes.append(cand)
                    break
    nodes = np.array(nodes)
    n = len(nodes)
    rows, cols, w = [], [], []
    for i in range(n):
        for j in range(i + 1, n):
            if _open_segment_inside(domain, nodes[i], nodes[j]):
                d = float(np.linalg.norm(nodes[i] - nodes[j]))
                rows += [i, j]
                cols += [j, i]
                w += [d, d]
    graph = csr_matrix((w, (rows, cols)), shape=(n, n))
    dist, pred = shortest_path(graph, directed=False, indices=0, return_predecessors=True)
    if not np.isfinite(dist[1]):
        raise ChainError("no path between start and maximizer")
    path = [1]
    while path[-1] != 0:
        path.append(pred[path[-1]])
    return nodes[path[::-1]]


def _last_param_within(path: np.ndarray, cum: np.ndarray, point: np.ndarray, rad: float) -> float:
    """Largest arc-length parameter (normalized) of the path within ``rad`` of ``point``."""
    total = cum[-1]
    best = -1.0
    for k in range(len(path) - 1):
        p, q = path[k], path[k + 1]
        d = q - p
        L = cum[k + 1] - cum[k]
        f = p - point
        a = d @ d
        b = 2 * f @ d
        c = f @ f - rad * rad
        if a == 0:
            continue
        disc = b * b - 4 * a * c
        if disc < 0:
            continue
        t_hi = (-b + math.sqrt(disc)) / (2 * a)
        t_lo = (-b - math.sqrt(disc)) / (2 * a)
        if t_hi < 0 or t_lo > 1:
            continue
        t = min(t_hi, 1.0)
        best = max(best, (cum[k] + t * L) / total)
    return best


def _path_point(path, cum, s):
    target = s * cum[-1]
    k = int(np.searchsorted(cum, target, side="right") - 1)
    k = min(max(k, 0), len(path) - 2)
    L = cum[k + 1] - cum[k]
    t = 0.0 if L == 0 else (target - cum[k]) / L
    return path[k] + t * (path[k + 1] - path[k])


def field_maximizer(field: ScalarField, domain: PolygonDomain, spacing: float) -> np.ndarray:
    """Point of largest ``|u|`` (mesh vertices for FEM fields, grid plus ascent otherwise)."""
    if isinstance(field, FEMField):
        return field.mesh.vertices[int(np.argmax(np.abs(field.values)))].copy()
    xmin, ymin, xmax, ymax = domain.bounds
    X, Y = np.meshgrid(np.arange(xmin, xmax, spacing), np.arange(ymin, ymax, spacing), indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[domain.classify(pts) == INSIDE]
    vals = np.abs(field.eval(pts))
    i = int(np.argmax(vals))
    bp, _ = _ascend(lambda p: np.abs(field.eval(p)),
                    lambda p: domain.classify(p) == INSIDE, pts[i:i + 1], spacing / 2, spacing * 1e-8)
    return bp[0]


def chain_of_balls(domain: PolygonDomain, start, r: float, field: ScalarField | None = None,
                   maximizer=None, seed: int = 0, check_radius: bool = False,
                   net: np.ndarray | None = None) -> ChainReport:
    """Chain of balls of radius ``r/2`` from ``start`` to the maximizer of ``|u|``.

    A precomputed ``r/8``-net may be passed to reuse it across fields.
    """
    start = np.asarray(start, dtype=float)[:2]
    if check_radius and not r < domain.r0 / 16:
        raise PreconditionError("need r < r0/16")
    if not r < domain.r0 / 16:
        warnings.warn("r is not below r0/16; the construction is run anyway", stacklevel=2)
    if domain.classify(start[None])[0] == OUTSIDE:
        raise ChainError("start point lies outside the domain")
    if maximizer is None:
        if field is None:
            raise ChainError("need a field or an explicit maximizer")
        maximizer = field_maximizer(field, domain, r / 8)
    x0 = np.asarray(maximizer, dtype=float)[:2]
    if net is None:
        net = build_net(domain, r / 8, seed, spacing=r / 24)
    path = chain_path(domain, start, x0)
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    tree = cKDTree(net)
    centers = [start]
    params = []
    if cum[-1] == 0:
        centers.append(x0)
        params.append(1.0)
    else:
        for _ in range(len(net) + 3):
            y = centers[-1]
            s = _last_param_within(path, cum, y, r / 8)
            params.append(s)
            if s >= 1.0 or np.linalg.norm(y - x0) <= r / 8:
                centers.append(x0)
                break
            g = _path_point(path, cum, s)
            d, i = tree.query(g)
            if not d < r / 8:
                raise ChainError("net does not cover the path")
            centers.append(net[i])
        else:
            raise ChainError("chain did not reach the maximizer")
    balls = [Ball(c, r / 2) for c in centers]
    report = ChainReport(balls, net, len(balls) - 1, path, x0, np.array(params))
    inv = report.invariants(r)
    if not (inv["step_below_quarter"] and inv["nested"] and inv["count_bound"]):
        raise ChainError(f"chain invariants violated: {inv}")
    return report
