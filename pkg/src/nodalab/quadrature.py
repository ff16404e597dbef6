"""Integrals over the intersection of triangles with disks.

Each (triangle, disk) pair is integrated in polar coordinates about the
disk center. The angular range is split at the directions of the
triangle vertices and of the points where triangle edges cross the
circle; between consecutive split angles the radial limits are smooth
functions of the angle, so a Gauss-Kronrod rule in the angle and a
Gauss-Legendre rule in the radius converge quickly. Angular intervals
are bisected adaptively until the Kronrod/Gauss difference meets the
requested relative tolerance for every disk.

An optional radial weight ``w(s)`` with ``s = sqrt(R^2 - rho^2)`` is
supported; on the outer half of the radial range the substitution
``rho = sqrt(R^2 - s^2)`` removes the square-root singularity at the
circle. This is what the fiber-reduced three-dimensional masses need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# 15-point Kronrod nodes on [-1, 1] (non-negative half) and weights
_XK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
THETA_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
THETA_KRONROD = np.concatenate([_WK[:-1], _WK[::-1]])
THETA_GAUSS = np.zeros(15)
_gauss_pos = [1, 3, 5, 7]
for _i, _w in zip(_gauss_pos, _WG):
    THETA_GAUSS[_i] = _w
    THETA_GAUSS[14 - _i] = _w

# degree-4 symmetric rule on the reference triangle (barycentric, weights sum 1)
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
TRI_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
TRI_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)


@dataclass
class DiskIntegral:
    values: np.ndarray
    errors: np.ndarray
    converged: np.ndarray


def _critical_angles(cells: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Sorted split angles per pair, shape (P, 11), padded with pi."""
    rel = cells - centers[:, None, :]
    ang_v = np.arctan2(rel[..., 1], rel[..., 0])
    p = rel
    q = np.roll(rel, -1, axis=1)
    d = q - p
    a = np.sum(d * d, axis=2)
    b = 2 * np.sum(p * d, axis=2)
    c = np.sum(p * p, axis=2) - radii[:, None] ** 2
    disc = b * b - 4 * a * c
    ok = disc > 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    crossings = []
    for sign in (-1.0, 1.0):
        t = (-b + sign * sq) / (2 * a)
        good = ok & (t > 0) & (t < 1)
        pt = p + t[..., None] * d
        crossings.append(np.where(good, np.arctan2(pt[..., 1], pt[..., 0]), np.pi))
    ang = np.concatenate([ang_v] + crossings + [np.full((len(cells), 2), np.pi)], axis=1)
    ang[:, -1] = -np.pi
    ang.sort(axis=1)
    return ang


def _radial_limits(theta, normals, offsets, radii):
    """Radial interval of the ray at angle ``theta`` inside triangle and disk.

    ``theta`` has shape (I, K); ``normals`` (I, 3, 2) are inward edge
    normals and ``offsets`` (I, 3) the values ``n . (v - c)`` so that the
    ray point ``rho e`` is inside when ``rho (n . e) >= offset``.
    """
    e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    den = np.einsum("ijd,ikd->ikj", normals, e)
    g = offsets[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = g / den
    tiny = 1e-300
    lower = np.where(den > tiny, ratio, np.where(den < -tiny, -np.inf, np.where(g > 0, np.inf, -np.inf)))
    upper = np.where(den < -tiny, ratio, np.where(den > tiny, np.inf, np.where(g > 0, -np.inf, np.inf)))
    lo = np.maximum(lower.max(axis=2), 0.0)
    hi = np.minimum(upper.min(axis=2), radii[:, None])
    return e, lo, hi


def _edge_data(cells, centers):
    rel = cells - centers[:, None, :]
    d = np.roll(rel, -1, axis=1) - rel
    normals = np.stack([-d[..., 1], d[..., 0]], axis=-1)
    normals /= np.linalg.norm(normals, axis=2, keepdims=True)
    offsets = np.sum(normals * rel, axis=2)
    return normals, offsets


def _integrate_intervals(a, b, normals, offsets, centers, radii, cell_ids, integrand,
                         radial_weight, nr_nodes, nr_weights):
    """Kronrod and Gauss estimates for each angular interval."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    theta = mid[:, None] + half[:, None] * THETA_NODES[None, :]
    e, lo, hi = _radial_limits(theta, normals, offsets, radii)
    width = np.maximum(hi - lo, 0.0)
    R = radii[:, None]

    def inner(rlo, rhi, use_sub):
        # returns sum over radial nodes of f * rho * w dr, shape (I, 15)
        if use_sub:
            slo = np.sqrt(np.maximum(R**2 - rhi**2, 0.0))
            shi = np.sqrt(np.maximum(R**2 - rlo**2, 0.0))
            span = np.maximum(shi - slo, 0.0)
            s = slo[..., None] + 0.5 * span[..., None] * (1 + nr_nodes)
            rho = np.sqrt(np.maximum(R[..., None] ** 2 - s**2, 0.0))
            jac = s * 0.5 * span[..., None] * nr_weights  # rho drho = s ds
            wt = radial_weight(s) if radial_weight is not None else 1.0
        else:
            span = np.maximum(rhi - rlo, 0.0)
            rho = rlo[..., None] + 0.5 * span[..., None] * (1 + nr_nodes)
            jac = rho * 0.5 * span[..., None] * nr_weights
            if radial_weight is not None:
                s = np.sqrt(np.maximum(R[..., None] ** 2 - rho**2, 0.0))
                wt = radial_weight(s)
            else:
                wt = 1.0
        pts = centers[:, None, None, :] + rho[..., None] * e[:, :, None, :]
        ids = np.broadcast_to(cell_ids[:, None, None], rho.shape)
        vals = integrand(pts, ids)
        vals = np.where(jac > 0, vals, 0.0)
        return np.sum(vals * wt * jac, axis=-1)

    if radial_weight is None:
        radial = inner(lo, hi, False)
    else:
        split = 0.5 * R
        lo_in, hi_in = lo, np.minimum(hi, split)
        lo_out, hi_out = np.maximum(lo, split), hi
        radial = inner(lo_in, np.maximum(hi_in, lo_in), False)
        radial = radial + inner(lo_out, np.maximum(hi_out, lo_out), True)
    radial = np.where(width > 0, radial, 0.0)
    kron = half * (radial @ THETA_KRONROD)
    gauss = half * (radial @ THETA_GAUSS)
    return kron, gauss


def integrate_disk_cells(cells, centers, radii, owner, n_out, integrand, *,
                         cell_ids=None, radial_weight=None, rtol: float = 1e-5,
                         atol: float = 0.0, radial_order: int = 16,
                         max_rounds: int = 40, chunk: int = 3000) -> DiskIntegral:
    """Integrate over ``cell[p] ∩ disk(centers[p], radii[p])`` and sum by ``owner``.

    Parameters
    ----------
    cells : (P, 3, 2) counter-clockwise triangles.
    centers, radii : disk for each pair.
    owner : (P,) index of the output slot each pair contributes to.
    integrand : callable ``f(points, cell_ids) -> values`` on arrays of shape (..., 2).
    radial_weight : optional callable of ``s = sqrt(R^2 - rho^2)``.

    Returns
    -------
    DiskIntegral with values, error estimates and a convergence flag per slot.
    """
    cells = np.asarray(cells, dtype=float)
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    owner = np.asarray(owner, dtype=np.int64)
    P = len(cells)
    if cell_ids is None:
        cell_ids = np.arange(P)
    cell_ids = np.asarray(cell_ids)
    values = np.zeros(n_out)
    errors = np.zeros(n_out)
    converged = np.ones(n_out, dtype=bool)
    if P == 0:
        return DiskIntegral(values, errors, converged)
    nr_nodes, nr_weights = np.polynomial.legendre.leggauss(radial_order)
    normals, offsets = _edge_data(cells, centers)

    angles = _critical_angles(cells, centers, radii)
    a = angles[:, :-1].ravel()
    b = angles[:, 1:].ravel()
    pair = np.repeat(np.arange(P), angles.shape[1] - 1)
    keep = b - a > 1e-14
    a, b, pair = a[keep], b[keep], pair[keep]
    # drop empty angular intervals (emptiness is constant between split angles)
    _, lo, hi = _radial_limits(0.5 * (a + b)[:, None], normals[pair], offsets[pair], radii[pair])
    keep = (hi - lo)[:, 0] > 0
    a, b, pair = a[keep], b[keep], pair[keep]

    def run(a, b, pair):
        kron = np.empty(len(a))
        gauss = np.empty(len(a))
        for s in range(0, len(a), chunk):
            sl = slice(s, s + chunk)
            pp = pair[sl]
            kron[sl], gauss[sl] = _integrate_intervals(
                a[sl], b[sl], normals[pp], offsets[pp], centers[pp], radii[pp],
                cell_ids[pp], integrand, radial_weight, nr_nodes, nr_weights)
        return kron, gauss

    kron, gauss = run(a, b, pair)
    err = np.abs(kron - gauss)
    done_val = np.zeros(n_out)
    done_err = np.zeros(n_out)
    for _round in range(max_rounds):
        slot = owner[pair]
        total = done_val + np.bincount(slot, kron, minlength=n_out)
        tot_err = done_err + np.bincount(slot, err, minlength=n_out)
        target = np.maximum(rtol * np.abs(total), atol)
        bad_slot = tot_err > target
        if not bad_slot.any():
            break
        count = np.bincount(slot, minlength=n_out).clip(min=1)
        share = target[slot] / count[slot]
        split = bad_slot[slot] & (err > 0.5 * share)
        if not split.any():
            split = bad_slot[slot] & (err >= np.maximum(err.max() * 0.1, 0))
        # intervals not split are frozen
        frozen = ~split
        done_val += np.bincount(slot[frozen], kron[frozen], minlength=n_out)
        done_err += np.bincount(slot[frozen], err[frozen], minlength=n_out)
        m = 0.5 * (a[split] + b[split])
        a = np.concatenate([a[split], m])
        b = np.concatenate([m, b[split]])
        pair = np.concatenate([pair[split], pair[split]])
        kron, gauss = run(a, b, pair)
        err = np.abs(kron - gauss)
    slot = owner[pair]
    values = done_val + np.bincount(slot, kron, minlength=n_out)
    errors = done_err + np.bincount(slot, err, minlength=n_out)
    converged = errors <= np.maximum(rtol * np.abs(values), atol) * (1 + 1e-12)
    return DiskIntegral(values, errors, converged)


def triangle_rule(cells: np.ndarray, integrand, cell_ids=None) -> np.ndarray:
    """Degree-4 rule on each full triangle, shape (T,)."""
    cells = np.asarray(cells, dtype=float)
    pts = np.einsum("qk,tkd->tqd", TRI_BARY, cells)
    e1 = cells[:, 1] - cells[:, 0]
    e2 = cells[:, 2] - cells[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if cell_ids is None:
        cell_ids = np.arange(len(cells))
    ids = np.broadcast_to(np.asarray(cell_ids)[:, None], pts.shape[:2])
    vals = integrand(pts, ids)
    return area * (vals @ TRI_WEIGHTS)


def collapsed_rule(cells: np.ndarray, integrand, order: int = 8, cell_ids=None) -> np.ndarray:
    """Tensor Gauss rule on the collapsed square, for smooth non-polynomial integrands."""
    x, w = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (x + 1)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu) * (1 - U)
    l1 = U.ravel()
    l2 = (V * (1 - U)).ravel()
    bary = np.column_stack([1 - l1 - l2, l1, l2])
    weights = 2 * W.ravel()  # reference triangle area 1/2 -> weights sum to 1
    cells = np.asarray(cells, dtype=float)
    pts = np.einsum("qk,tkd->tqd", bary, cells)
    e1 = cells[:, 1] - cells[:, 0]
    e2 = cells[:, 2] - cells[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if cell_ids is None:
        cell_ids = np.arange(len(cells))
    ids = np.broadcast_to(np.asarray(cell_ids)[:, None], pts.shape[:2])
    return area * (integrand(pts, ids) @ weights)
