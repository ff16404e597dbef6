"""P1 finite elements for the Dirichlet Laplacian and closed-form oracles."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .fields import DiskMode, FEMField, RectangleMode, bessel_zero
from .geometry import PolygonDomain
from .meshing import TriangleMesh, triangulate


class AssemblyError(ValueError):
    """Degenerate element or invalid mesh during assembly."""


class EigenSolveError(RuntimeError):
    """Eigensolver failed to converge; carries the best residual reached."""

    def __init__(self, message: str, best_residual: float = math.inf):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass(frozen=True)
class EigenPair:
    lam: float
    coeffs: np.ndarray
    residual: float


@dataclass(frozen=True)
class DofMap:
    """Free (interior) vertex indices; ``expand`` restores boundary zeros."""

    free: np.ndarray
    n_vertices: int

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        full = np.zeros(self.n_vertices)
        full[self.free] = reduced
        return full

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[self.free]


def element_matrices(vertices: np.ndarray, triangles: np.ndarray):
    """Per-element stiffness and consistent mass matrices, shape (T, 3, 3)."""
    p = vertices[triangles]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = 0.5 * (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
    if np.any(area <= 1e-300):
        raise AssemblyError("degenerate or inverted triangle")
    # grad phi_i = rot(e_i) / (2 area); K_ij = (e_i . e_j) / (4 area)
    stiff = np.einsum("tid,tjd->tij", e, e) / (4 * area[:, None, None])
    base = np.array([[2.0, 1, 1], [1, 2, 1], [1, 1, 2]]) / 12.0
    mass = area[:, None, None] * base[None]
    return stiff, mass


def assemble(mesh: TriangleMesh, dirichlet: bool = True):
    """Global stiffness ``K`` and mass ``M`` (CSR) and the Dirichlet dof map."""
    stiff, mass = element_matrices(mesh.vertices, mesh.triangles)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sparse.csr_matrix((stiff.ravel(), (rows, cols)), shape=(n, n))
    M = sparse.csr_matrix((mass.ravel(), (rows, cols)), shape=(n, n))
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    if dirichlet:
        free = np.nonzero(~mesh.boundary_vertex)[0]
    else:
        free = np.arange(n)
    dof = DofMap(free, n)
    return K[free][:, free].tocsr(), M[free][:, free].tocsr(), dof


def solve_eigen(K, M, count: int, tol: float = 1e-8, max_applications: int = 10_000) -> list[EigenPair]:
    """Smallest ``count`` eigenpairs of ``K u = lam M u`` by shift-invert Lanczos.

    Eigenvectors are M-orthonormal with the sign fixed so that the
    entry of largest magnitude is positive.
    """
    n = K.shape[0]
    if count < 1:
        raise ValueError("count must be at least 1")
    if count >= n - 1:
        raise ValueError("too many eigenpairs requested for this mesh")
    v0 = np.ones(n) / math.sqrt(n)
    ncv = min(n, max(2 * count + 1, 20))
    best = math.inf
    for attempt in range(3):
        try:
            vals, vecs = eigsh(K, k=count, M=M, sigma=0.0, which="LM", v0=v0, ncv=ncv,
                               tol=tol * 1e-4, maxiter=max_applications * count)
        except ArpackNoConvergence as exc:
            if exc.eigenvectors is not None and len(exc.eigenvalues):
                r = _residuals(K, M, exc.eigenvalues, exc.eigenvectors)
                best = min(best, float(r.max()))
            ncv = min(n, 2 * ncv)
            continue
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        vecs = _m_orthonormalize(M, vecs)
        res = _residuals(K, M, vals, vecs)
        best = min(best, float(res.max()))
        if res.max() <= tol:
            pairs = []
            for lam, vec, r in zip(vals, vecs.T, res):
                i = int(np.argmax(np.abs(vec)))
                vec = vec if vec[i] > 0 else -vec
                pairs.append(EigenPair(float(lam), vec.copy(), float(r)))
            return pairs
        ncv = min(n, 2 * ncv)
    raise EigenSolveError(f"eigensolver did not reach residual {tol:g}", best)


def _m_orthonormalize(M, vecs):
    gram = vecs.T @ (M @ vecs)
    L = np.linalg.cholesky(0.5 * (gram + gram.T))
    return np.linalg.solve(L, vecs.T).T


def _residuals(K, M, vals, vecs):
    r = K @ vecs - (M @ vecs) * vals[None, :]
    return np.linalg.norm(r, axis=0) / np.linalg.norm(vecs, axis=0)


def eigenfields(mesh: TriangleMesh, count: int, tol: float = 1e-8):
    """Assemble, solve and wrap the eigenvectors as FEM fields."""
    K, M, dof = assemble(mesh)
    pairs = solve_eigen(K, M, count, tol)
    return [(FEMField(mesh, dof.expand(p.coeffs)), p) for p in pairs]


def rayleigh_quotient(mesh: TriangleMesh, values: np.ndarray) -> float:
    K, M, dof = assemble(mesh)
    u = dof.restrict(values)
    return float(u @ (K @ u) / (u @ (M @ u)))


def analytic_rectangle(m: int, n: int, a: float = 1.0, b: float = 1.0):
    field = RectangleMode(m, n, a, b)
    return field, field.lam


def analytic_disk(k: int, j: int):
    field = DiskMode(k, j)
    return field, field.lam


def rectangle_spectrum(count: int, a: float = 1.0, b: float = 1.0) -> list[tuple[int, int, float]]:
    """First ``count`` modes ``(m, n, lam)`` ordered by eigenvalue, then by ``(m, n)``."""
    top = int(math.ceil(math.sqrt(count))) + 2
    while True:
        modes = sorted(((math.pi**2 * (m * m / a**2 + n * n / b**2), m, n)
                        for m in range(1, top + 1) for n in range(1, top + 1)))
        cutoff = modes[count - 1][0]
        if math.pi**2 * (top + 1) ** 2 / max(a, b) ** 2 > cutoff:
            return [(m, n, lam) for lam, m, n in modes[:count]]
        top *= 2


@dataclass
class MonotonicityReport:
    lam_domain: float
    lam_ball: float
    diameter: float
    holds: bool
    method: str


def first_eigenvalue_monotonicity_check(domain: PolygonDomain, h: float = 0.02,
                                        method: str = "auto") -> MonotonicityReport:
    """Compare the first eigenvalue with that of the disk of radius ``diam(domain)``."""
    diam = domain.diameter
    lam_ball = (bessel_zero(0, 1) / diam) ** 2
    if method == "auto":
        method = "analytic" if domain.is_axis_rectangle() else "fem"
    if method == "analytic":
        xmin, ymin, xmax, ymax = domain.bounds
        lam = math.pi**2 * (1 / (xmax - xmin) ** 2 + 1 / (ymax - ymin) ** 2)
    else:
        mesh = triangulate(domain, min(h, diam / 8))
        K, M, _ = assemble(mesh)
        lam = solve_eigen(K, M, 1)[0].lam
    return MonotonicityReport(lam, lam_ball, diam, lam >= lam_ball, method)


def save_solution(path, pairs: list[EigenPair], dof: DofMap, mesh_ref: str) -> None:
    data = {
        "mesh_ref": mesh_ref,
        "pairs": [{"lambda": p.lam, "residual": p.residual,
                   "coeffs": dof.expand(p.coeffs).tolist()} for p in pairs],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)


def load_solution(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "pairs" not in data or "mesh_ref" not in data:
        raise ValueError("solution file needs 'mesh_ref' and 'pairs'")
    return data
