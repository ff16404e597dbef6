"""Falsification experiments for the doubling-index and nodal-set inequalities.

Every check runs an inequality over a corpus of fields and configurations
and returns a :class:`CheckReport`. A case counts as a violation only when
its signed slack is below minus its own numerical error estimate. All
randomness flows from a single seed, and per-case records are written with
``repr`` floats so that repeated runs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import stats

from .doubling import build_net, chain_of_balls, doubling_indices, masses, max_doubling
from .fields import (ExtensionField, FieldError, FunctionField, HarmonicPolynomialField,
                     IntervalMode, RectangleMode, ScalarField, make_extension, sup_on_ball)
from .geometry import (INSIDE, OUTSIDE, Ball, Cube, Cylinder, HalfPlane, LipschitzPatch, Plane,
                       PolygonDomain, Strip, standard_construction)
from .meshing import refine, triangulate
from .nodal import extract_nodal, measure_in_ball
from .spectral import eigenfields, rectangle_spectrum

COROLLARY_EPS = 0.1
DEFAULT_N0 = 10.0


class VerifyError(ValueError):
    """Invalid check configuration (empty corpus, failed normalization)."""


@dataclass
class CheckReport:
    """Outcome of one check.

    ``worst_margin`` is the smallest signed slack over the cases (positive
    means the inequality held). ``assertions`` collects the pass/fail
    conditions that are not per-case inequalities, such as fit quality.
    """

    check_id: str
    cases: int
    violations: int
    worst_margin: float
    artifacts: list = dc_field(default_factory=list)
    runtime_ms: float | None = None
    extras: dict = dc_field(default_factory=dict)
    assertions: dict = dc_field(default_factory=dict)
    rows: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and all(self.assertions.values())

    def summary(self) -> dict:
        return {
            "check_id": self.check_id,
            "cases": int(self.cases),
            "violations": int(self.violations),
            "worst_margin": _json_float(self.worst_margin),
            "runtime_ms": None if self.runtime_ms is None else round(float(self.runtime_ms), 3),
            "passed": bool(self.passed),
            "assertions": {k: bool(v) for k, v in self.assertions.items()},
            "extras": {k: _json_value(v) for k, v in self.extras.items()},
            "artifacts": list(self.artifacts),
        }


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _json_float(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_json_value(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _json_value(x) for k, x in v.items()}
    return v if v is None else str(v)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(report: CheckReport, path) -> None:
    """Per-case rows; the header is the key order of the first row."""
    columns = list(report.rows[0]) if report.rows else ["case"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in report.rows:
            w.writerow([_cell(row.get(c)) for c in columns])


def write_summary(report: CheckReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.summary(), fh, indent=2, allow_nan=False)
        fh.write("\n")


def write_artifacts(report: CheckReport, out_dir) -> list:
    """Write ``<check_id>.csv``, an optional SVG and ``<check_id>_summary.json``."""
    os.makedirs(out_dir, exist_ok=True)
    names = [f"{report.check_id}.csv"]
    svg = report.extras.pop("_svg", None)
    if svg is not None:
        names.append(f"{report.check_id}.svg")
    report.artifacts = names + [f"{report.check_id}_summary.json"]
    write_csv(report, os.path.join(out_dir, names[0]))
    if svg is not None:
        with open(os.path.join(out_dir, names[1]), "w", encoding="utf-8") as fh:
            fh.write(svg)
    write_summary(report, os.path.join(out_dir, report.artifacts[-1]))
    return [os.path.join(out_dir, n) for n in report.artifacts]


def _finish(check_id, rows, t0, timing, extras=None, assertions=None,
            margin_key="margin", error_key="err") -> CheckReport:
    if not rows:
        raise VerifyError(f"{check_id}: no cases were run")
    margins = np.array([r[margin_key] for r in rows if r.get(margin_key) is not None], float)
    errs = np.array([r.get(error_key, 0.0) or 0.0 for r in rows if r.get(margin_key) is not None], float)
    violations = int(np.sum(margins < -errs)) if margins.size else 0
    worst = float(margins.min()) if margins.size else math.inf
    runtime = (time.perf_counter() - t0) * 1e3 if timing else None
    return CheckReport(check_id, len(rows), violations, worst, [], runtime,
                       dict(extras or {}), dict(assertions or {}), rows)


# ---------------------------------------------------------------------------
# corpora


def random_harmonic_polynomials(n: int, seed: int = 0, max_degree: int = 6) -> list:
    """Harmonic polynomials with random degree and normal coefficients."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        d = int(rng.integers(1, max_degree + 1))
        a = rng.normal(size=d + 1)
        b = rng.normal(size=d + 1)
        b[0] = 0.0
        out.append(HarmonicPolynomialField(a, b))
    return out


def vanishing_polynomials(n: int, seed: int = 0, max_degree: int = 6, shift: float = 0.2) -> list:
    """``sum_k b_k Im((z - s)^k)`` with real ``s``: these vanish on the real axis."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        d = int(rng.integers(1, max_degree + 1))
        b = rng.normal(size=d + 1)
        b[0] = 0.0
        s = float(rng.uniform(-shift, shift))
        out.append(HarmonicPolynomialField(np.zeros(d + 1), b, center=s))
    return out


def sector_case(tau: float, reflex: bool, radius: float = 1.0):
    """Patch whose graph is ``+-tau |y1|`` and the positive harmonic function of its sector.

    The domain above the graph is locally a sector of opening ``alpha``;
    ``r^beta sin(beta (theta - theta_a))`` with ``beta = pi / alpha``
    vanishes on both sides. Centered at the vertex its doubling index is
    ``(2 beta + 2) ln 2`` at every radius.
    """
    sign = -1.0 if reflex else 1.0
    patch = LipschitzPatch.from_function((0.0, 0.0), radius, 0.0,
                                         lambda y: sign * tau * np.abs(y), tau)
    theta_a = sign * math.atan(tau)
    beta = math.pi / (math.pi - 2 * theta_a)

    def func(pts):
        x, y = pts[..., 0], pts[..., 1]
        th = np.arctan2(y, x)
        th = np.where(th < theta_a - 1e-12, th + 2 * np.pi, th)
        arg = np.clip(beta * (th - theta_a), 0.0, np.pi)
        return np.hypot(x, y) ** beta * np.sin(arg)

    return patch, FunctionField(func, kind="sector", domain=patch), beta


def _quarter_points(patch: LipschitzPatch, n: int, rng, boundary_fraction: float = 0.5) -> np.ndarray:
    """Points of the closed domain inside the quarter ball of the patch."""
    q = 0.25 * patch.radius * 0.98
    y1 = rng.uniform(-0.9 * q, 0.9 * q, n)
    f = patch.f(y1)
    top = np.sqrt(np.maximum(q * q - y1 * y1, 0.0))
    on_bnd = rng.random(n) < boundary_fraction
    y2 = np.where(on_bnd, f, f + rng.random(n) * np.maximum(top - f, 0.0))
    return patch.to_world(np.column_stack([y1, y2]))


def _as_cases(patch, fields):
    if not fields:
        raise VerifyError("the field corpus is empty")
    return [(patch, f) for f in fields]


def _label(field: ScalarField, i: int) -> str:
    if isinstance(field, HarmonicPolynomialField):
        return "harmonic:" + field.spec()
    return f"{field.kind}#{i}"


# ---------------------------------------------------------------------------
# doubling-index inequalities


def check_interior_monotonicity(fields=None, n_pairs: int = 20, seed: int = 0,
                                timing: bool = False) -> CheckReport:
    """``N(x, r) <= N(x, R)`` for ``r < R`` away from any boundary."""
    t0 = time.perf_counter()
    fields = random_harmonic_polynomials(50, seed) if fields is None else fields
    if not fields:
        raise VerifyError("the field corpus is empty")
    rng = np.random.default_rng(seed)
    rows = []
    for i, h in enumerate(fields):
        x = rng.uniform(-1, 1, size=(n_pairs, 2))
        R = rng.uniform(0.1, 0.6, n_pairs)
        r = R * rng.uniform(0.05, 0.95, n_pairs)
        dv = doubling_indices(h, np.vstack([x, x]), np.concatenate([r, R]), Plane())
        Nr, NR = dv.N[:n_pairs], dv.N[n_pairs:]
        er, eR = dv.error[:n_pairs], dv.error[n_pairs:]
        for j in range(n_pairs):
            err = max(1e-6, er[j] + eR[j])
            rows.append({"field": i, "cx": x[j, 0], "cy": x[j, 1], "r": r[j], "R": R[j],
                         "N_r": Nr[j], "N_R": NR[j], "margin": NR[j] - Nr[j], "err": err})
    return _finish("monotonicity", rows, t0, timing)


def check_almost_monotonicity(patch: LipschitzPatch, fields, r_grid=None, n_centers: int = 4,
                              threshold: float = 0.5, seed: int = 0,
                              timing: bool = False) -> CheckReport:
    """Smallest ``eps`` with ``N(x0, r) <= (1 + eps) N(x0, 2r)`` near a boundary patch.

    Centers are drawn from the closed domain in the quarter ball of the
    patch, half of them on the graph, and ``r < R/16``. The report holds the
    largest measured ``eps`` and flags cases exceeding ``threshold``.
    """
    t0 = time.perf_counter()
    cases = _as_cases(patch, fields)
    R = patch.radius
    r_grid = np.geomspace(R / 256, R / 16 * 0.99, 6) if r_grid is None else np.asarray(r_grid, float)
    if np.any(r_grid >= R / 16):
        raise VerifyError("radii must be below R/16")
    rng = np.random.default_rng(seed)
    rows = []
    for i, (p, h) in enumerate(cases):
        pts = _quarter_points(p, n_centers, rng)
        pts[0] = p.center
        C = np.repeat(pts, len(r_grid), axis=0)
        r = np.tile(r_grid, len(pts))
        dv = doubling_indices(h, np.vstack([C, C]), np.concatenate([r, 2 * r]), p)
        n = len(C)
        N1, N2, e1, e2 = dv.N[:n], dv.N[n:], dv.error[:n], dv.error[n:]
        eps = N1 / N2 - 1
        err = e1 / N2 + np.abs(N1) * e2 / N2**2
        for j in range(n):
            rows.append({"field": _label(h, i), "cx": C[j, 0], "cy": C[j, 1], "r": r[j],
                         "N_r": N1[j], "N_2r": N2[j], "eps_hat": eps[j],
                         "margin": threshold - eps[j], "err": err[j]})
    eps_all = np.array([row["eps_hat"] for row in rows])
    return _finish("almost_monotonicity", rows, t0, timing,
                   extras={"max_eps_hat": float(eps_all.max()), "threshold": threshold})


def check_corollary_shift(patch: LipschitzPatch, fields, n_pairs: int = 1, eps: float = COROLLARY_EPS,
                          seed: int = 0, timing: bool = False) -> CheckReport:
    """``N(x1, r/2) <= 3 (1 + eps)^2 N(x2, r)`` for nearby centers ``|x1 - x2| < r/4``.

    The exact intermediate bound ``N(x2, r/4) + N(x2, r/2) + N(x2, r)``
    from the ball inclusions is recorded alongside.
    """
    t0 = time.perf_counter()
    cases = _as_cases(patch, fields)
    rng = np.random.default_rng(seed)
    R = patch.radius
    rows = []
    q = 0.25 * R
    for i, (p, h) in enumerate(cases):
        for _ in range(n_pairs):
            r = float(rng.uniform(R / 64, R / 8 * 0.99))
            x2 = _quarter_points(p, 1, rng)[0]
            for _attempt in range(200):
                ang = rng.uniform(0, 2 * np.pi)
                rho = (r / 4) * 0.999 * math.sqrt(rng.random())
                x1 = x2 + rho * np.array([math.cos(ang), math.sin(ang)])
                if np.linalg.norm(x1 - np.array(p.center)) < q and p.classify(x1[None])[0] != OUTSIDE:
                    break
            else:
                x1 = x2.copy()
            C = np.array([x1, x2, x2, x2])
            radii = np.array([r / 2, r, r / 4, r / 2])
            dv = doubling_indices(h, C, radii, p)
            lhs = dv.N[0]
            rhs = 3 * (1 + eps) ** 2 * dv.N[1]
            chain = dv.N[1] + dv.N[2] + dv.N[3]
            err = dv.error[0] + 3 * (1 + eps) ** 2 * dv.error[1]
            rows.append({"field": _label(h, i), "x1": x1[0], "y1": x1[1], "x2": x2[0], "y2": x2[1],
                         "r": r, "lhs": lhs, "rhs": rhs, "inclusion_bound": chain,
                         "margin": rhs - lhs, "err": err})
    return _finish("corollary_shift", rows, t0, timing, extras={"eps": eps})


# ---------------------------------------------------------------------------
# three-ball and mean-value bounds


def check_three_ball_interior(fields=None, n_balls: int = 1, seed: int = 0, n_samples: int = 4000,
                              timing: bool = False) -> CheckReport:
    """``sup_{3r/2} |h| <= 2^d (sup_r |h|)^(1/2) (sup_4r |h|)^(1/2)`` for harmonic ``h``.

    The margin is relative to the right-hand side.
    """
    t0 = time.perf_counter()
    fields = random_harmonic_polynomials(100, seed) if fields is None else fields
    if not fields:
        raise VerifyError("the field corpus is empty")
    rng = np.random.default_rng(seed)
    rows = []
    for i, h in enumerate(fields):
        for _ in range(n_balls):
            x = rng.uniform(-1, 1, 2)
            r = float(rng.uniform(0.05, 0.4))
            s = [sup_on_ball(h, Ball(x, f * r), Plane(), n_samples, seed) for f in (1.5, 1.0, 4.0)]
            lhs = s[0].value
            rhs = 4.0 * math.sqrt(s[1].value * s[2].value)
            if rhs <= 0:
                continue
            err = (lhs * s[0].rel_error + 0.5 * rhs * (s[1].rel_error + s[2].rel_error)) / rhs
            rows.append({"field": i, "cx": x[0], "cy": x[1], "r": r, "sup_mid": lhs,
                         "sup_inner": s[1].value, "sup_outer": s[2].value, "rhs": rhs,
                         "margin": (rhs - lhs) / rhs, "err": err})
    return _finish("three_ball_interior", rows, t0, timing)


def check_three_ball_boundary(patch: LipschitzPatch, fields, n_balls: int = 1, seed: int = 0,
                              n_samples: int = 4000, timing: bool = False) -> CheckReport:
    """``sup_{(3/2)B0} |h| <= 3^d (sup_{B0} |h|)^(1/3) (sup_{4B0} |h|)^(2/3)`` near the patch.

    ``B0`` is centered in the closed domain in the quarter ball with
    ``16 B0`` inside the patch ball. Fields that vanish on ``4 B0`` are
    skipped (the inequality needs a nonzero field).
    """
    t0 = time.perf_counter()
    cases = _as_cases(patch, fields)
    rng = np.random.default_rng(seed)
    rows = []
    skipped = 0
    for i, (p, h) in enumerate(cases):
        for _ in range(n_balls):
            x0 = _quarter_points(p, 1, rng)[0]
            room = (p.radius - np.linalg.norm(x0 - np.array(p.center))) / 16
            r = float(rng.uniform(0.2, 1.0) * room)
            s = [sup_on_ball(h, Ball(x0, f * r), p, n_samples, seed) for f in (1.5, 1.0, 4.0)]
            if s[2].value <= 1e-300:
                skipped += 1
                continue
            lhs = s[0].value
            rhs = 9.0 * s[1].value ** (1 / 3) * s[2].value ** (2 / 3)
            err = (lhs * s[0].rel_error + rhs * (s[1].rel_error / 3 + 2 * s[2].rel_error / 3)) / rhs
            rows.append({"field": _label(h, i), "cx": x0[0], "cy": x0[1], "r": r, "sup_mid": lhs,
                         "sup_inner": s[1].value, "sup_outer": s[2].value, "rhs": rhs,
                         "margin": (rhs - lhs) / rhs, "err": err})
    return _finish("three_ball_boundary", rows, t0, timing, extras={"skipped_zero": skipped})


def check_subharmonic(patch: LipschitzPatch, fields, n_balls: int = 1, seed: int = 0,
                      n_samples: int = 4000, timing: bool = False) -> CheckReport:
    """``h(y)^2 <= |B(y, r/2)|^-1 H(x, r)`` for ``y`` in ``B(x, r/2)`` and the closed domain.

    The left side is maximized over ``y``; the margin is relative to the
    right-hand side.
    """
    t0 = time.perf_counter()
    cases = _as_cases(patch, fields)
    rng = np.random.default_rng(seed)
    rows = []
    for i, (p, h) in enumerate(cases):
        for _ in range(n_balls):
            x = _quarter_points(p, 1, rng)[0]
            room = p.radius - np.linalg.norm(x - np.array(p.center))
            r = float(rng.uniform(0.05, 0.5) * room)
            s = sup_on_ball(h, Ball(x, r / 2), p, n_samples, seed)
            m = masses(h, x[None], np.array([r]), p)
            H, eH = float(m.values[0]), float(m.errors[0])
            rhs = H / (math.pi * (r / 2) ** 2)
            lhs = s.value**2
            if rhs <= 0:
                continue
            err = 2 * s.rel_error * lhs / rhs + eH / H
            rows.append({"field": _label(h, i), "cx": x[0], "cy": x[1], "r": r,
                         "y_x": s.point[0], "y_y": s.point[1], "h2_max": lhs, "mean_bound": rhs,
                         "margin": (rhs - lhs) / rhs, "err": err})
    return _finish("subharmonic", rows, t0, timing)


# ---------------------------------------------------------------------------
# quantitative Cauchy uniqueness


def cauchy_family_member(eps: float) -> FunctionField:
    """``sin(n x) sinh(n y) / (n cosh n)`` with ``cosh n = 1/eps``.

    Harmonic, zero on ``y = 0`` with normal derivative at most ``eps`` there,
    and ``|h|, |grad h| <= 1`` on the unit half-disk.
    """
    n = math.acosh(1.0 / eps)
    c = n * math.cosh(n)

    def func(p):
        return np.sin(n * p[..., 0]) * np.sinh(n * p[..., 1]) / c

    def grad(p):
        gx = n * np.cos(n * p[..., 0]) * np.sinh(n * p[..., 1]) / c
        gy = n * np.sin(n * p[..., 0]) * np.cosh(n * p[..., 1]) / c
        return np.stack([gx, gy], axis=-1)

    return FunctionField(func, grad, kind="cauchy", domain=HalfPlane(), magnitude=1.0)


def _linear_member(eps: float, which: str) -> FunctionField:
    if which == "y":
        return FunctionField(lambda p: eps * p[..., 1],
                             lambda p: np.stack([0 * p[..., 0], eps + 0 * p[..., 1]], -1),
                             kind="cauchy_y", domain=HalfPlane())
    return FunctionField(lambda p: eps * p[..., 0],
                         lambda p: np.stack([eps + 0 * p[..., 0], 0 * p[..., 1]], -1),
                         kind="cauchy_x", domain=HalfPlane())


def _half_disk_samples(n: int = 40_000, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.random(n))
    th = np.pi * rng.random(n)
    inner = np.column_stack([r * np.cos(th), r * np.sin(th)])
    th = np.linspace(0, np.pi, 2001)
    rim = np.column_stack([np.cos(th), np.sin(th)])
    gamma = np.column_stack([np.linspace(-1, 1, 4001), np.zeros(4001)])
    return np.vstack([inner, rim, gamma]), gamma


def _check_normalization(h: FunctionField, eps: float, pts, gamma, slack: float = 1e-9) -> dict:
    v = np.abs(h.eval(pts)).max()
    g = np.linalg.norm(h.grad(pts), axis=1).max()
    cv = np.abs(h.eval(gamma)).max()
    cd = np.abs(h.grad(gamma)[:, 1]).max()
    ok = v <= 1 + slack and g <= 1 + slack and cv <= eps * (1 + slack) and cd <= eps * (1 + slack)
    if not ok:
        raise FieldError(f"normalization failed for eps={eps:g}: sup|h|={v:.3g}, sup|grad h|={g:.3g}, "
                         f"Cauchy data {cv:.3g}, {cd:.3g}")
    return {"sup_h": v, "sup_grad": g, "cauchy_value": cv, "cauchy_normal": cd}


def _loglog_fit(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and coefficient of determination in log-log."""
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2) / ss) if ss > 0 else 1.0
    return float(slope), float(intercept), r2


def check_cauchy(eps_values=None, seed: int = 0, n_samples: int = 4000,
                 timing: bool = False) -> CheckReport:
    """Fit ``sup_{(1/3)B+} |h| ~ C eps^gamma`` over a normalized family.

    The family ``sin(n x) sinh(n y) / (n cosh n)`` has Cauchy data of size
    ``eps = 1 / cosh n`` on the flat part of the half-disk. The pure-scaling
    families ``eps y`` and ``eps x`` must give slope 1.
    """
    t0 = time.perf_counter()
    eps_values = np.geomspace(1e-6, 1e-1, 11) if eps_values is None else np.asarray(eps_values, float)
    if eps_values.size < 3:
        raise VerifyError("need at least three eps values for a fit")
    pts, gamma = _half_disk_samples(seed=seed)
    ball = Ball((0.0, 0.0), 1.0 / 3.0)
    rows = []
    sups = {"family": [], "y": [], "x": []}
    for eps in eps_values:
        members = {"family": cauchy_family_member(eps), "y": _linear_member(eps, "y"),
                   "x": _linear_member(eps, "x")}
        for name, h in members.items():
            norm = _check_normalization(h, eps, pts, gamma)
            s = sup_on_ball(h, ball, HalfPlane(), n_samples, seed)
            sups[name].append(s.value)
            rows.append({"family": name, "eps": eps, "sup_third": s.value, "rel_err": s.rel_error,
                         "sup_h": norm["sup_h"], "sup_grad": norm["sup_grad"],
                         "cauchy_value": norm["cauchy_value"], "cauchy_normal": norm["cauchy_normal"]})
    gamma_hat, c_log, r2 = _loglog_fit(eps_values, np.array(sups["family"]))
    slope_y, _, _ = _loglog_fit(eps_values, np.array(sups["y"]))
    slope_x, _, _ = _loglog_fit(eps_values, np.array(sups["x"]))
    assertions = {
        "gamma_positive": gamma_hat > 0.05,
        "fit_r2": r2 >= 0.9,
        "scaling_slope_y": abs(slope_y - 1) <= 0.02,
        "scaling_slope_x": abs(slope_x - 1) <= 0.02,
    }
    extras = {"gamma_hat": gamma_hat, "C_hat": math.exp(c_log), "r2": r2,
              "slope_y": slope_y, "slope_x": slope_x}
    rep = _finish("cauchy", rows, t0, timing, extras, assertions, margin_key="_none")
    rep.worst_margin = gamma_hat - 0.05
    return rep


# ---------------------------------------------------------------------------
# hyperplane dichotomy


@dataclass
class HyperplaneReport:
    """Outcome of one dichotomy experiment on a boundary cube ``Q``."""

    dichotomy: str
    N_star_Q: float
    N2_Q: float
    cubes: list
    halved: bool
    zero_free: bool


def _zero_free(field: ScalarField, domain, q: Cube, n: int = 65) -> bool:
    """True when ``field`` keeps a strict sign on the open part of ``q`` in the domain.

    Harmonic functions change sign across every interior zero, so a sign
    test on a fine grid detects the zero set in ``q``.
    """
    u = np.linspace(-0.5, 0.5, n) * q.side
    U, V = np.meshgrid(u, u, indexing="ij")
    loc = np.column_stack([U.ravel(), V.ravel()])
    c, s = math.cos(q.angle), math.sin(q.angle)
    pts = loc @ np.array([[c, s], [-s, c]]) + np.array(q.center)
    keep = domain.classify(pts) == INSIDE
    keep &= domain.boundary_distance(pts) > 1e-9 * q.side
    vals = field.eval(pts[keep])
    if not vals.size:
        return True
    tol = 1e-12 * field.scale
    return bool(np.all(vals > tol) or np.all(vals < -tol))


def run_hyperplane_experiment(patch: LipschitzPatch, field: ScalarField, Q: Cube, k: int = 3,
                              N0: float = DEFAULT_N0, grid: int = 9, n_radii: int = 5,
                              rounds: int = 1) -> HyperplaneReport:
    """Test whether some boundary cube halves ``N**`` or misses the zero set.

    ``N**(q) = max(N*(q), N0/2)``. Outcome ``"halved"`` means some
    boundary cube has ``N**(q) < N**(Q)/2``, ``"zero_free"`` that some
    boundary cube has no zeros of ``field``; otherwise ``"neither"``.
    """
    sc = standard_construction(patch, Q, k)
    top = max_doubling(field, Q, patch, grid, n_radii, rounds)
    n2_Q = max(top.value, N0 / 2)
    cubes = []
    for q in sc.boundary_cubes:
        md = max_doubling(field, q, patch, grid, n_radii, rounds)
        n2 = max(md.value, N0 / 2)
        zf = _zero_free(field, patch, q)
        cubes.append({"center": tuple(float(c) for c in q.center), "side": q.side,
                      "N_star": md.value, "N2": n2, "halved": n2 < n2_Q / 2, "zero_free": zf})
    halved = any(c["halved"] for c in cubes)
    zero_free = any(c["zero_free"] for c in cubes)
    outcome = "halved" if halved else ("zero_free" if zero_free else "neither")
    return HyperplaneReport(outcome, top.value, n2_Q, cubes, halved, zero_free)


def hyperplane_corpus(n_random: int = 6, seed: int = 0, radius: float = 2.0):
    """Flat patch, boundary squares near its center and fields vanishing on the flat part."""
    patch = LipschitzPatch.flat(radius=radius, tau=0.01)
    side = 0.04 * radius / 2
    fields = [HarmonicPolynomialField([0.0, 0.0], [0.0, 1.0])]
    for kdeg in (2, 3, 4, 5):
        fields.append(HarmonicPolynomialField.im_power(kdeg))
    fields += vanishing_polynomials(n_random, seed, max_degree=5, shift=side)
    cubes = [Cube((0.0, 0.0), side), Cube((side / 4, 0.0), side)]
    return [(patch, h, Q) for h in fields for Q in cubes]


def check_hyperplane(cases=None, k: int = 3, N0: float = DEFAULT_N0, grid: int = 9,
                     n_radii: int = 5, rounds: int = 1, min_fraction: float = 0.95,
                     seed: int = 0, timing: bool = False) -> CheckReport:
    """Fraction of configurations where outcome (i) or (ii) is observed."""
    t0 = time.perf_counter()
    cases = hyperplane_corpus(seed=seed) if cases is None else cases
    if not cases:
        raise VerifyError("the case list is empty")
    rows = []
    for i, (patch, h, Q) in enumerate(cases):
        rep = run_hyperplane_experiment(patch, h, Q, k, N0, grid, n_radii, rounds)
        rows.append({"case": i, "field": _label(h, i), "qx": Q.center[0], "qy": Q.center[1],
                     "side": Q.side, "N_star_Q": rep.N_star_Q, "N2_Q": rep.N2_Q,
                     "min_N2_q": min(c["N2"] for c in rep.cubes),
                     "zero_free_cubes": sum(c["zero_free"] for c in rep.cubes),
                     "dichotomy": rep.dichotomy})
    outcomes = [r["dichotomy"] for r in rows]
    frac = 1.0 - outcomes.count("neither") / len(outcomes)
    extras = {"fraction": frac, "neither": outcomes.count("neither"),
              "halved": outcomes.count("halved"), "zero_free": outcomes.count("zero_free"), "N0": N0}
    rep = _finish("hyperplane", rows, t0, timing, extras, {"fraction": frac >= min_fraction},
                  margin_key="_none")
    rep.worst_margin = frac - min_fraction
    return rep


# ---------------------------------------------------------------------------
# nodal bounds


def interior_nodal_ratio_closed_form(k: int) -> float:
    """Ratio for ``Re z^k`` on ``B(0, r)``: ``2k / ((2k + 2) ln 2 + 1)``."""
    return 2 * k / ((2 * k + 2) * math.log(2) + 1)


def _nodal_length_in_ball(field, center, r, resolution, domain=None) -> float:
    c = np.asarray(center, float)
    window = (c[0] - r, c[1] - r, c[0] + r, c[1] + r)
    ns = extract_nodal(field, Plane() if domain is None else domain, resolution, window)
    return measure_in_ball(ns, Ball(c, r))


def check_interior_nodal_bound(fields=None, n_random: int = 50, bound: float = 5.0,
                               resolution_factor: float = 1 / 200, seed: int = 0,
                               timing: bool = False) -> CheckReport:
    """``length(Z(h) in B(x, r)) / ((N(x, 4r) + 1) r)`` over interior balls.

    The corpus holds ``Re z^k`` for ``k = 1..6`` on ``B(0, 1)`` (closed-form
    ratio) and random harmonic polynomials on random balls. Balls are taken
    in the whole plane, so the ``8r`` interior hypothesis always holds.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    cases = [(HarmonicPolynomialField.re_power(k), np.zeros(2), 1.0, k) for k in range(1, 7)]
    extra = random_harmonic_polynomials(n_random, seed) if fields is None else list(fields)
    for h in extra:
        cases.append((h, rng.uniform(-1, 1, 2), float(rng.uniform(0.1, 0.5)), None))
    rows = []
    worst_closed = 0.0
    for i, (h, c, r, k) in enumerate(cases):
        length = _nodal_length_in_ball(h, c, r, r * resolution_factor)
        dv = doubling_indices(h, c[None], np.array([4 * r]), Plane())
        N = float(dv.N[0])
        rho = length / ((N + 1) * r)
        row = {"case": i, "field": _label(h, i), "cx": c[0], "cy": c[1], "r": r, "length": length,
               "N_4r": N, "ratio": rho, "closed_form": None, "rel_dev": None,
               "margin": bound - rho, "err": rho * (2 * resolution_factor + float(dv.error[0]))}
        if k is not None:
            exact = interior_nodal_ratio_closed_form(k)
            row["closed_form"] = exact
            row["rel_dev"] = abs(rho - exact) / exact
            worst_closed = max(worst_closed, row["rel_dev"])
        rows.append(row)
    ratios = np.array([row["ratio"] for row in rows])
    return _finish("interior_nodal", rows, t0, timing,
                   extras={"fitted_C": float(ratios.max()), "closed_form_max_rel_dev": worst_closed},
                   assertions={"closed_form_2pct": worst_closed <= 0.02,
                               "max_ratio": float(ratios.max()) <= bound})


def _flat_piece(domain, center, radius) -> bool:
    """Whether the boundary inside ``B(center, radius)`` is one straight piece."""
    c = np.asarray(center, float)[:2]
    if isinstance(domain, HalfPlane):
        return True
    if isinstance(domain, Strip):
        near = [abs(c[0] - w) < radius for w in (domain.a, domain.b)]
        return sum(near) <= 1
    if isinstance(domain, PolygonDomain):
        verts = np.vstack(domain.loops)
        return bool(np.all(np.linalg.norm(verts - c, axis=1) >= radius))
    if isinstance(domain, LipschitzPatch):
        return np.linalg.norm(c - np.array(domain.center)) + radius <= domain.radius
    return False


def boundary_nodal_corpus():
    """Interval-mode extensions at the wall and square-mode extensions at an edge midpoint."""
    cases = []
    for m in range(1, 7):
        h = make_extension(IntervalMode(m), (m * math.pi) ** 2)
        for r in (0.5 / m, 1.5 / m):
            cases.append((h, np.array([0.0, 0.0]), r))
    for m, n in ((3, 2), (2, 3), (2, 2), (4, 1)):
        u = RectangleMode(m, n)
        cases.append((make_extension(u, u.lam), np.array([0.0, 0.5, 0.0]), 0.2))
    return cases


def check_boundary_nodal_bound(cases=None, resolution: float = 0.004,
                               hypothesis_radius_factor: float = 1.0, stability: float = 0.1,
                               timing: bool = False) -> CheckReport:
    """``|Z(h) in B(x, r)| / ((N(x, 4r) + 1) r^(d-1))`` at boundary centers.

    Each ratio is measured at ``resolution`` and ``resolution / 2`` and must
    agree within ``stability`` (relative). Cases whose boundary piece in
    ``B(x, hypothesis_radius_factor * r)`` is not a single flat piece are
    skipped with a note.
    """
    t0 = time.perf_counter()
    cases = boundary_nodal_corpus() if cases is None else cases
    rows = []
    skipped = []
    for i, (h, c, r) in enumerate(cases):
        c = np.asarray(c, float)
        if isinstance(h, ExtensionField) and h.base.dim == 2:
            base_domain = h.base.domain
        else:
            base_domain = h.domain
        if not _flat_piece(base_domain, c, hypothesis_radius_factor * r):
            skipped.append(i)
            rows.append({"case": i, "field": _label(h, i), "cx": c[0], "cy": c[1], "r": r,
                         "length": None, "N_4r": None, "ratio": None, "ratio_half": None,
                         "rel_change": None, "margin": None, "err": None,
                         "note": "skipped: boundary piece not flat at hypothesis radius"})
            continue
        d = len(c)
        ball = Ball(c, r)
        window = (c[0] - r, c[1] - r, c[0] + r, c[1] + r) if d == 2 else None
        meas = []
        for res in (resolution, resolution / 2):
            ns = extract_nodal(h, None, res, window)
            meas.append(measure_in_ball(ns, ball))
        dv = doubling_indices(h, c[None], np.array([4 * r]), h.domain)
        N = float(dv.N[0])
        denom = (N + 1) * r ** (d - 1)
        rho, rho2 = meas[0] / denom, meas[1] / denom
        top = max(rho, rho2)
        change = abs(rho - rho2) / top if top > 0 else 0.0
        rows.append({"case": i, "field": _label(h, i), "cx": c[0], "cy": c[1], "r": r,
                     "length": meas[0], "N_4r": N, "ratio": rho, "ratio_half": rho2,
                     "rel_change": change, "margin": stability - change,
                     "err": float(dv.error[0]), "note": ""})
    ratios = [row["ratio"] for row in rows if row["ratio"] is not None]
    rep = _finish("boundary_nodal", rows, t0, timing,
                  extras={"max_ratio": max(ratios) if ratios else 0.0, "skipped": len(skipped),
                          "hypothesis_radius_factor": hypothesis_radius_factor})
    rep.cases = len(rows) - len(skipped)
    return rep


# ---------------------------------------------------------------------------
# doubling bound for eigenfunction extensions


def _eigen_corpus(domain: PolygonDomain, count: int, h: float = 0.02):
    """``(field, lam, label)`` for the first ``count`` Dirichlet eigenpairs."""
    if domain.is_axis_rectangle():
        xmin, ymin, xmax, ymax = domain.bounds
        a, b = xmax - xmin, ymax - ymin
        out = []
        for m, n, lam in rectangle_spectrum(count, a, b):
            out.append((RectangleMode(m, n, a, b, (xmin, ymin)), lam, f"rect:{m},{n}"))
        return out
    mesh = triangulate(domain, h)
    return [(u, p.lam, f"fem#{j}") for j, (u, p) in enumerate(eigenfields(mesh, count))]


def _center_grid(domain: PolygonDomain, n: int) -> np.ndarray:
    xmin, ymin, xmax, ymax = domain.bounds
    X, Y = np.meshgrid(np.linspace(xmin, xmax, n), np.linspace(ymin, ymax, n), indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return pts[domain.classify(pts) != OUTSIDE]


def fit_through_origin(x, y) -> tuple[float, float]:
    """Slope of ``y ~ C x`` and the uncentered coefficient of determination."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    C = float(np.dot(x, y) / np.dot(x, x))
    r2 = 1.0 - float(np.sum((y - C * x) ** 2) / np.sum(y * y))
    return C, r2


def check_df_doubling_bound(domain: PolygonDomain | None = None, count: int = 20, r: float = 0.05,
                            grid: int = 11, h: float = 0.02, chain: bool = True,
                            start=None, seed: int = 0, timing: bool = False) -> CheckReport:
    """Largest ``N`` of ``u exp(sqrt(lam) t)`` at radius ``r`` against ``sqrt(lam)``.

    For each eigenpair the doubling index of the extension is maximized over
    a grid of centers in the closed domain at ``t = 0`` (it does not depend
    on ``t``). The maxima are fitted by ``C sqrt(lam)`` through the origin.
    With ``chain`` a chain of balls from ``start`` to the maximizer of
    ``|u|`` is built for every eigenfunction and its invariants are checked.
    """
    t0 = time.perf_counter()
    domain = PolygonDomain.rectangle() if domain is None else domain
    if not r < domain.r0 / 16:
        warnings.warn("r is not below r0/16 for this domain; the sweep is run anyway", stacklevel=2)
    corpus = _eigen_corpus(domain, count, h)
    centers = _center_grid(domain, grid)
    c3 = np.column_stack([centers, np.zeros(len(centers))])
    if start is None:
        xmin, ymin, xmax, _ = domain.bounds
        start = (0.5 * (xmin + xmax), ymin)
    net = build_net(domain, r / 8, seed, spacing=r / 24) if chain else None
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for j, (u, lam, label) in enumerate(corpus):
            ext = make_extension(u, lam)
            dv = doubling_indices(ext, c3, np.full(len(c3), r), Cylinder(domain))
            i = int(np.argmax(dv.N))
            row = {"index": j + 1, "mode": label, "lam": lam, "sqrt_lam": math.sqrt(lam),
                   "N_max": dv.N[i], "arg_x": centers[i, 0], "arg_y": centers[i, 1], "err": dv.error[i]}
            if chain:
                rep = chain_of_balls(domain, start, r, field=u, seed=seed, net=net)
                inv = rep.invariants(r)
                ok = inv["step_below_quarter"] and inv["nested"] and inv["count_bound"]
                row.update({"chain_steps": rep.steps, "net_size": len(net), "chain_ok": ok,
                            "chain_max_gap": inv["max_gap"]})
            rows.append(row)
    sq = np.array([row["sqrt_lam"] for row in rows])
    Nm = np.array([row["N_max"] for row in rows])
    C, r2 = fit_through_origin(sq, Nm)
    rho = float(stats.spearmanr(np.arange(len(Nm)), Nm)[0]) if len(Nm) > 2 else 1.0
    chain_ok = all(row.get("chain_ok", True) for row in rows)
    for row in rows:
        row["margin"] = 0.0 if row.get("chain_ok", True) else -1.0
    rep = _finish("df_doubling", rows, t0, timing,
                  extras={"C_r": C, "r2": r2, "spearman": rho, "r": r},
                  assertions={"fit_r2": r2 >= 0.8, "spearman": rho > 0.7, "chain_invariants": chain_ok},
                  error_key="_none")
    rep.worst_margin = r2 - 0.8
    return rep


# ---------------------------------------------------------------------------
# Yau sweep


def rectangle_grid_modes(max_index: int, a: float = 1.0, b: float = 1.0) -> list:
    """All ``(m, n, lam)`` with ``m, n <= max_index`` ordered by eigenvalue."""
    modes = [(math.pi**2 * (m * m / a**2 + n * n / b**2), m, n)
             for m in range(1, max_index + 1) for n in range(1, max_index + 1)]
    return [(m, n, lam) for lam, m, n in sorted(modes)]


def _scatter_svg(x, y, title: str, size: int = 420) -> str:
    pad = 40
    x, y = np.asarray(x, float), np.asarray(y, float)
    xmax = float(x.max()) if x.size else 1.0
    ymax = float(y.max()) if y.size and y.max() > 0 else 1.0
    w = size - 2 * pad
    px = pad + w * x / xmax
    py = size - pad - w * y / ymax
    dots = "\n".join(f'  <circle cx="{a:.3f}" cy="{b:.3f}" r="3" fill="#1f4e79"/>' for a, b in zip(px, py))
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}">\n'
        f'  <rect width="{size}" height="{size}" fill="white"/>\n'
        f'  <line x1="{pad}" y1="{size - pad}" x2="{size - pad}" y2="{size - pad}" stroke="black"/>\n'
        f'  <line x1="{pad}" y1="{pad}" x2="{pad}" y2="{size - pad}" stroke="black"/>\n'
        f'  <text x="{pad}" y="{pad - 12}" font-size="13">{title}</text>\n'
        f'  <text x="{size - pad}" y="{size - 12}" font-size="11" text-anchor="end">sqrt(lambda), max {xmax:.4g}</text>\n'
        f'  <text x="4" y="{pad + 4}" font-size="11">{ymax:.4g}</text>\n'
        f"{dots}\n</svg>\n"
    )


def yau_sweep(domain: PolygonDomain | None = None, count: int = 36, modes=None,
              source: str = "auto", h: float = 0.01, resolution: float = 0.005,
              ratio_bound: float | None = None, error_bars: bool = False,
              stability: float = 0.1, timing: bool = False) -> CheckReport:
    """Nodal length ``L_k`` and ``L_k / sqrt(lam_k)`` for the first eigenfunctions.

    ``source="analytic"`` (chosen by ``"auto"`` for axis rectangles) uses
    closed-form modes; ``"fem"`` solves on a mesh of size ``h``, and with
    ``error_bars`` repeats the solve on the refined mesh. The running
    maximum of the ratio must change by at most ``stability`` (relative)
    over the last third of the sweep.
    """
    t0 = time.perf_counter()
    domain = PolygonDomain.rectangle() if domain is None else domain
    if source == "auto":
        source = "analytic" if domain.is_axis_rectangle() else "fem"
    rows = []
    if source == "analytic":
        if not domain.is_axis_rectangle():
            raise VerifyError("closed-form modes need an axis-aligned rectangle")
        xmin, ymin, xmax, ymax = domain.bounds
        a, b = xmax - xmin, ymax - ymin
        if modes is None:
            if count < 5:
                raise VerifyError("the sweep needs at least five eigenfunctions")
            modes = rectangle_spectrum(count, a, b)
        for j, (m, n, lam) in enumerate(modes):
            u = RectangleMode(m, n, a, b, (xmin, ymin))
            L = extract_nodal(u, domain, resolution).total_length
            exact = (m - 1) * b + (n - 1) * a
            rows.append({"index": j + 1, "mode": f"{m},{n}", "lam": lam, "length": L,
                         "exact_length": exact, "ratio": L / math.sqrt(lam),
                         "err": abs(L - exact) / math.sqrt(lam)})
    elif source == "fem":
        if count < 5:
            raise VerifyError("the sweep needs at least five eigenfunctions")
        mesh = triangulate(domain, h)
        pairs = eigenfields(mesh, count)
        fine = eigenfields(refine(mesh), count) if error_bars else None
        for j, (u, p) in enumerate(pairs):
            L = extract_nodal(u).total_length
            row = {"index": j + 1, "mode": f"fem#{j}", "lam": p.lam, "length": L,
                   "exact_length": None, "ratio": L / math.sqrt(p.lam), "err": None}
            if fine is not None:
                uf, pf = fine[j]
                Lf = extract_nodal(uf).total_length
                row["lam_fine"] = pf.lam
                row["length_fine"] = Lf
                row["err"] = abs(Lf / math.sqrt(pf.lam) - row["ratio"])
            rows.append(row)
    else:
        raise VerifyError(f"unknown source {source!r}")
    ratios = np.array([row["ratio"] for row in rows])
    running = np.maximum.accumulate(ratios)
    start = max(0, int(math.ceil(2 * len(ratios) / 3)) - 1)
    growth = float((running[-1] - running[start]) / running[-1]) if running[-1] > 0 else 0.0
    for row, rm in zip(rows, running):
        row["running_max"] = rm
        row["margin"] = None if ratio_bound is None else ratio_bound - row["ratio"]
    assertions = {"running_max_stable": growth <= stability}
    if ratio_bound is not None:
        assertions["ratio_bound"] = bool(ratios.max() <= ratio_bound)
    extras = {"max_ratio": float(ratios.max()), "argmax_index": int(np.argmax(ratios)) + 1,
              "running_max_growth_last_third": growth, "source": source,
              "_svg": _scatter_svg(np.sqrt([row["lam"] for row in rows]), ratios,
                                   "nodal length / sqrt(lambda)")}
    rep = _finish("yau", rows, t0, timing, extras, assertions, error_key="_none")
    if ratio_bound is None:
        rep.worst_margin = stability - growth
    return rep


# ---------------------------------------------------------------------------
# default corpora and registry


def flat_patch_corpus(n: int = 100, seed: int = 0):
    patch = LipschitzPatch.flat(radius=1.0, tau=0.01)
    return patch, vanishing_polynomials(n, seed)


def default_check(name: str, seed: int = 0, timing: bool = False, **kw) -> CheckReport:
    """Run a named check with its default corpus."""
    if name == "monotonicity":
        return check_interior_monotonicity(seed=seed, timing=timing, **kw)
    if name == "almost-monotonicity":
        patch, fields = flat_patch_corpus(kw.pop("cases", 20), seed)
        return check_almost_monotonicity(patch, fields, seed=seed, timing=timing, **kw)
    if name == "corollary-shift":
        patch, fields = flat_patch_corpus(kw.pop("cases", 100), seed)
        return check_corollary_shift(patch, fields, seed=seed, timing=timing, **kw)
    if name == "three-ball-interior":
        fields = random_harmonic_polynomials(kw.pop("cases", 100), seed)
        return check_three_ball_interior(fields, seed=seed, timing=timing, **kw)
    if name == "three-ball-boundary":
        patch, fields = flat_patch_corpus(kw.pop("cases", 100), seed)
        return check_three_ball_boundary(patch, fields, seed=seed, timing=timing, **kw)
    if name == "subharmonic":
        patch, fields = flat_patch_corpus(kw.pop("cases", 100), seed)
        return check_subharmonic(patch, fields, seed=seed, timing=timing, **kw)
    if name == "cauchy":
        return check_cauchy(seed=seed, timing=timing, **kw)
    if name == "hyperplane":
        return check_hyperplane(seed=seed, timing=timing, **kw)
    if name == "interior-nodal":
        return check_interior_nodal_bound(seed=seed, timing=timing, **kw)
    if name == "boundary-nodal":
        return check_boundary_nodal_bound(timing=timing, **kw)
    if name == "df-doubling":
        return check_df_doubling_bound(seed=seed, timing=timing, **kw)
    if name == "yau":
        return yau_sweep(timing=timing, **kw)
    raise VerifyError(f"unknown check {name!r}")


CHECK_NAMES = ("monotonicity", "almost-monotonicity", "corollary-shift", "three-ball-interior",
               "three-ball-boundary", "subharmonic", "cauchy", "hyperplane", "interior-nodal",
               "boundary-nodal", "df-doubling", "yau")
