"""Command-line entry point.

Exit codes: 0 success (and no violations), 1 violations or failed
assertions, 2 usage or input errors. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
import warnings

import numpy as np

from .doubling import chain_of_balls, doubling_profile
from .fields import (DiskMode, ExtensionField, FEMField, HarmonicPolynomialField, IntervalMode,
                     RectangleMode, ScalarField, make_extension)
from .geometry import Cube, LipschitzPatch, PolygonDomain, construction_coverage, standard_construction
from .meshing import TriangleMesh, load_domain, triangulate
from .nodal import extract_nodal
from .spectral import assemble, load_solution, save_solution, solve_eigen
from .verify import CHECK_NAMES, default_check, write_artifacts, yau_sweep


class SpecError(ValueError):
    """Malformed field SPEC or command argument."""


BUILTIN_DOMAINS = {
    "square": PolygonDomain.rectangle,
    "lshape": PolygonDomain.l_shape,
    "disk": lambda: PolygonDomain.regular_polygon(256),
}


# ---------------------------------------------------------------------------
# field SPEC grammar

_UNUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_NUM = r"[+-]?" + _UNUM
_BASE = rf"(?:z|\(\s*z\s*(?P<sign>[+-])\s*(?P<shift>{_UNUM})\s*\))"
_SIGNS = re.compile(r"\s*((?:[+-]\s*)*)")
_ATOM = re.compile(
    rf"\s*(?:(?P<coef>{_NUM})\s*\*\s*)?"
    rf"(?:(?P<part>Re|Im)\(\s*{_BASE}\s*(?:\^\s*(?P<k>\d+))?\s*\)|(?P<var>[xy])|(?P<const>{_NUM}))\s*"
)


def parse_harmonic(expr: str) -> HarmonicPolynomialField:
    """Parse sums of ``c*Re((z-s)^k)``, ``c*Im(z^k)``, ``x``, ``y`` and constants.

    All shifted terms must share one real center ``s``.
    """
    text = expr.strip()
    if not text:
        raise SpecError("empty harmonic expression")
    pos = 0
    terms = []
    first = True
    while pos < len(text):
        m = _SIGNS.match(text, pos)
        if not first and not m.group(1):
            raise SpecError(f"expected '+' or '-' at position {pos} in {expr!r}")
        sign = -1.0 if m.group(1).count("-") % 2 else 1.0
        pos = m.end()
        m = _ATOM.match(text, pos)
        if not m or m.end() == pos:
            raise SpecError(f"cannot parse term at position {pos} in {expr!r}")
        pos = m.end()
        first = False
        coef = sign * (float(m.group("coef")) if m.group("coef") else 1.0)
        if m.group("const") is not None:
            terms.append(("const", coef * float(m.group("const")), 0, None))
        elif m.group("var"):
            terms.append(("x" if m.group("var") == "x" else "y", coef, 1, None))
        else:
            k = int(m.group("k")) if m.group("k") else 1
            shift = None
            if m.group("shift") is not None:
                shift = float(m.group("shift")) * (1.0 if m.group("sign") == "-" else -1.0)
            terms.append((m.group("part"), coef, k, shift))
    shifts = {t[3] for t in terms if t[3] is not None}
    if len(shifts) > 1:
        raise SpecError("all shifted terms must share one center")
    c = shifts.pop() if shifts else 0.0
    deg = max(t[2] for t in terms)
    a = np.zeros(deg + 1)
    b = np.zeros(deg + 1)
    for kind, coef, k, shift in terms:
        if kind in ("Re", "Im") and shift is None and c != 0 and k > 1:
            raise SpecError("unshifted powers cannot be mixed with shifted ones")
        if kind == "Re":
            if shift is None and c != 0 and k == 1:
                a[1] += coef
                a[0] += coef * c
            else:
                a[k] += coef
        elif kind == "Im":
            b[k] += coef
        elif kind == "x":
            a[1] += coef
            a[0] += coef * c
        elif kind == "y":
            b[1] += coef
        else:
            a[0] += coef
    return HarmonicPolynomialField(a, b, center=c)


def _ints(text: str, lo: int, hi: int, what: str) -> list:
    parts = [p.strip() for p in text.split(",")]
    if not lo <= len(parts) <= hi:
        raise SpecError(f"{what} needs {lo} to {hi} comma-separated values")
    return parts


def parse_field(spec: str, base_dir: str = ".") -> ScalarField:
    """Build a field from a one-line SPEC (grammar in the README)."""
    kind, sep, body = spec.partition(":")
    if not sep:
        raise SpecError(f"field spec {spec!r} needs a 'kind:' prefix")
    kind = kind.strip().lower()
    try:
        if kind == "harmonic":
            return parse_harmonic(body)
        if kind == "rect":
            p = _ints(body, 2, 4, "rect")
            if len(p) == 3:
                raise SpecError("rect takes m,n or m,n,a,b")
            a, b = (float(p[2]), float(p[3])) if len(p) == 4 else (1.0, 1.0)
            return RectangleMode(int(p[0]), int(p[1]), a, b)
        if kind == "disk":
            p = _ints(body, 2, 2, "disk")
            return DiskMode(int(p[0]), int(p[1]))
        if kind == "interval":
            p = _ints(body, 1, 2, "interval")
            return IntervalMode(int(p[0]), float(p[1]) if len(p) == 2 else 1.0)
        if kind == "fem":
            path, hash_, idx = body.rpartition("#")
            if not hash_:
                raise SpecError("fem spec needs '<file>#<index>'")
            return load_fem_field(os.path.join(base_dir, path), int(idx))
        if kind == "ext":
            inner, at, lam = body.rpartition("@")
            if not at:
                inner, lam = body, ""
            u = parse_field(inner, base_dir)
            if lam.strip() in ("", "auto"):
                if not hasattr(u, "lam"):
                    raise SpecError("ext needs an explicit eigenvalue for this field")
                lam_v = float(u.lam)
            else:
                lam_v = float(lam)
            return make_extension(u, lam_v)
    except (ValueError, IndexError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"bad field spec {spec!r}: {exc}") from exc
    raise SpecError(f"unknown field kind {kind!r}")


def load_fem_field(solution_path: str, index: int) -> FEMField:
    """Eigenfunction ``index`` (1 = ground state) from a solution file."""
    data = load_solution(solution_path)
    pairs = data["pairs"]
    if not 1 <= index <= len(pairs):
        raise SpecError(f"index {index} outside 1..{len(pairs)}")
    mesh_path = os.path.join(os.path.dirname(os.path.abspath(solution_path)), data["mesh_ref"])
    mesh = TriangleMesh.load(mesh_path)
    field = FEMField(mesh, np.array(pairs[index - 1]["coeffs"], float))
    field.lam = float(pairs[index - 1]["lambda"])
    return field


def load_domain_arg(text: str) -> PolygonDomain:
    if text in BUILTIN_DOMAINS:
        return BUILTIN_DOMAINS[text]()
    return load_domain(text)


def _floats(text: str, n_min: int, n_max: int, what: str) -> list:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise SpecError(f"{what}: expected comma-separated numbers") from exc
    if not n_min <= len(vals) <= n_max:
        raise SpecError(f"{what}: expected {n_min} to {n_max} numbers")
    return vals


# ---------------------------------------------------------------------------
# self-validating writers


def _write_json(path: str, data: dict, required: tuple) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1, allow_nan=False)
        fh.write("\n")
    with open(path, encoding="utf-8") as fh:
        back = json.load(fh)
    missing = [k for k in required if k not in back]
    if missing:
        raise RuntimeError(f"{path}: missing keys {missing}")


def _check_csv(path: str, columns: list, rows: int | None = None) -> None:
    with open(path, newline="", encoding="utf-8") as fh:
        table = list(csv.reader(fh))
    if table[0] != columns or any(len(r) != len(columns) for r in table[1:]):
        raise RuntimeError(f"{path}: malformed CSV")
    if rows is not None and len(table) - 1 != rows:
        raise RuntimeError(f"{path}: expected {rows} rows")


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


# ---------------------------------------------------------------------------
# commands


def cmd_mesh(args) -> int:
    domain = load_domain_arg(args.domain)
    mesh = triangulate(domain, args.h, grade_reentrant=not args.no_grade)
    mesh.validate()
    path = _out(args, args.name or "mesh.json")
    _write_json(path, mesh.to_json(), ("vertices", "triangles", "boundary"))
    print(f"vertices={mesh.n_vertices} triangles={mesh.n_triangles} "
          f"h_max={mesh.h_max:.6g} min_angle={mesh.min_angle():.3f} -> {path}")
    return 0


def cmd_solve(args) -> int:
    mesh = TriangleMesh.load(args.mesh)
    K, M, dof = assemble(mesh)
    pairs = solve_eigen(K, M, args.count, args.tol)
    path = _out(args, args.name or "solution.json")
    ref = os.path.relpath(os.path.abspath(args.mesh), os.path.dirname(os.path.abspath(path)))
    save_solution(path, pairs, dof, ref)
    load_solution(path)
    csv_path = os.path.splitext(path)[0] + "_eigenvalues.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "lambda", "residual"])
        for i, p in enumerate(pairs, 1):
            w.writerow([i, repr(p.lam), repr(p.residual)])
    _check_csv(csv_path, ["index", "lambda", "residual"], len(pairs))
    for i, p in enumerate(pairs, 1):
        print(f"{i:4d}  lambda={p.lam:.10g}  residual={p.residual:.3g}")
    return 0


def cmd_nodal(args) -> int:
    if args.solution:
        field = load_fem_field(args.solution, args.index)
        domain = field.mesh.domain
    elif args.field:
        field = parse_field(args.field)
        domain = load_domain_arg(args.domain) if args.domain else field.domain
    else:
        raise SpecError("nodal needs --solution or --field")
    ns = extract_nodal(field, domain if not isinstance(field, FEMField) else None, args.resolution)
    path = _out(args, args.name or "nodal.json")
    data = ns.to_json()
    data["length"] = ns.total_length
    _write_json(path, data, ("segments", "length"))
    outline = domain.outer if isinstance(domain, PolygonDomain) else None
    svg_path = os.path.splitext(path)[0] + ".svg"
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(ns.to_svg(outline))
    print(f"length={ns.total_length!r} segments={len(ns.segments)} -> {path}")
    return 0


def cmd_doubling(args) -> int:
    field = parse_field(args.field)
    center = _floats(args.center, 2, 3, "--center")
    if isinstance(field, ExtensionField) and field.base.dim == 2 and len(center) == 2:
        center.append(0.0)
    domain = load_domain_arg(args.domain) if args.domain else None
    rep = doubling_profile(field, center, args.rmin, args.rmax, args.steps, domain)
    path = _out(args, args.name or "doubling.csv")
    rep.write_csv(path)
    _check_csv(path, ["center_x", "center_y", "center_t", "r", "H", "N", "err"], args.steps)
    for r, H, N, e in zip(rep.radii, rep.H_values, rep.N_values, rep.quad_error):
        print(f"r={r:.6g}  H={H:.10g}  N={N:.10g}  err={e:.2g}")
    return 0


def cmd_construct(args) -> int:
    with open(args.patch, encoding="utf-8") as fh:
        patch = LipschitzPatch.from_json(json.load(fh))
    cx, cy, s = _floats(args.cube, 3, 3, "--cube")
    sc = standard_construction(patch, Cube((cx, cy), s, patch.angle), args.k)
    data = sc.to_json()
    data["uncovered_fraction"] = construction_coverage(patch, sc)
    path = _out(args, args.name or "construction.json")
    _write_json(path, data, ("cube", "k", "boundary_cubes", "inner_cubes"))
    print(f"boundary={len(sc.boundary_cubes)} inner={len(sc.inner_cubes)} "
          f"uncovered={data['uncovered_fraction']!r} -> {path}")
    return 0


def cmd_chain(args) -> int:
    domain = load_domain_arg(args.domain)
    start = _floats(args.start, 2, 2, "--start")
    field = parse_field(args.field) if args.field else None
    maxim = _floats(args.maximizer, 2, 2, "--maximizer") if args.maximizer else None
    if field is None and maxim is None:
        raise SpecError("chain needs --field or --maximizer")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = chain_of_balls(domain, start, args.r, field=field, maximizer=maxim, seed=args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    inv = rep.invariants(args.r)
    data = {
        "r": args.r, "steps": rep.steps, "net_size": int(len(rep.net)),
        "centers": rep.centers.tolist(), "ball_radius": args.r / 2,
        "maximizer": rep.maximizer.tolist(), "path": rep.path.tolist(), "invariants": inv,
    }
    path = _out(args, args.name or "chain.json")
    _write_json(path, data, ("steps", "centers", "invariants"))
    print(f"steps={rep.steps} net={len(rep.net)} invariants={inv} -> {path}")
    ok = inv["step_below_quarter"] and inv["nested"] and inv["count_bound"]
    return 0 if ok else 1


def _verify_kwargs(args) -> dict:
    kw = {}
    name = args.check
    if args.cases is not None and name in ("almost-monotonicity", "corollary-shift", "three-ball-interior",
                                           "three-ball-boundary", "subharmonic"):
        kw["cases"] = args.cases
    if name in ("yau", "df-doubling") and args.domain:
        kw["domain"] = load_domain_arg(args.domain)
    if args.count is not None and name in ("yau", "df-doubling"):
        kw["count"] = args.count
    if args.r is not None and name == "df-doubling":
        kw["r"] = args.r
    if name == "yau":
        kw["source"] = args.source
        if args.h is not None:
            kw["h"] = args.h
        if args.resolution is not None:
            kw["resolution"] = args.resolution
        if args.ratio_bound is not None:
            kw["ratio_bound"] = args.ratio_bound
    return kw


def _report(rep, out_dir) -> int:
    paths = write_artifacts(rep, out_dir)
    for p in paths:
        if p.endswith(".csv"):
            _check_csv(p, list(rep.rows[0]), len(rep.rows))
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status} {rep.check_id}: cases={rep.cases} violations={rep.violations} "
          f"worst_margin={rep.worst_margin:.6g}")
    for k, v in rep.assertions.items():
        print(f"  {k}: {'ok' if v else 'failed'}")
    return 0 if rep.passed else 1


def cmd_verify(args) -> int:
    if args.check not in CHECK_NAMES:
        raise SpecError(f"unknown check {args.check!r}; choose from {', '.join(CHECK_NAMES)}")
    if args.check == "yau" and args.count is None:
        args.count = 36
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = default_check(args.check, seed=args.seed, timing=args.timing, **_verify_kwargs(args))
    return _report(rep, args.out)


def cmd_sweep(args) -> int:
    domain = load_domain_arg(args.domain)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = yau_sweep(domain, args.count, source=args.source, h=args.h or 0.01,
                        resolution=args.resolution or 0.005, error_bars=args.error_bars,
                        timing=args.timing)
    return _report(rep, args.out)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nodalab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, name_help=True):
        sp.add_argument("--out", default=".", help="output directory")
        if name_help:
            sp.add_argument("--name", default=None, help="output file name")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("mesh", help="triangulate a polygon domain")
    sp.add_argument("--domain", required=True, help="domain JSON file or square|lshape|disk")
    sp.add_argument("--h", type=float, required=True)
    sp.add_argument("--no-grade", action="store_true", help="no refinement at reentrant corners")
    common(sp)
    sp.set_defaults(func=cmd_mesh)

    sp = sub.add_parser("solve", help="Dirichlet eigenpairs on a mesh")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--tol", type=float, default=1e-8)
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("nodal", help="extract a nodal set")
    sp.add_argument("--solution")
    sp.add_argument("--index", type=int, default=1, help="eigenpair index, 1 = ground state")
    sp.add_argument("--field", help="field SPEC instead of a solution file")
    sp.add_argument("--domain")
    sp.add_argument("--resolution", type=float, default=0.005)
    common(sp)
    sp.set_defaults(func=cmd_nodal)

    sp = sub.add_parser("doubling", help="doubling-index profile")
    sp.add_argument("--field", required=True)
    sp.add_argument("--center", required=True, help="X,Y or X,Y,T")
    sp.add_argument("--rmin", type=float, required=True)
    sp.add_argument("--rmax", type=float, required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--domain")
    common(sp)
    sp.set_defaults(func=cmd_doubling)

    sp = sub.add_parser("construct", help="standard construction of a boundary square")
    sp.add_argument("--patch", required=True)
    sp.add_argument("--cube", required=True, help="CX,CY,S")
    sp.add_argument("--k", type=int, required=True)
    common(sp)
    sp.set_defaults(func=cmd_construct)

    sp = sub.add_parser("chain", help="chain of balls to the maximizer of |u|")
    sp.add_argument("--domain", required=True)
    sp.add_argument("--start", required=True, help="X,Y")
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--field")
    sp.add_argument("--maximizer", help="X,Y")
    common(sp)
    sp.set_defaults(func=cmd_chain)

    sp = sub.add_parser("verify", help="run one falsification check")
    sp.add_argument("check", help=", ".join(CHECK_NAMES))
    sp.add_argument("--cases", type=int)
    sp.add_argument("--domain")
    sp.add_argument("--count", type=int)
    sp.add_argument("--r", type=float)
    sp.add_argument("--source", default="auto", choices=("auto", "analytic", "fem"))
    sp.add_argument("--h", type=float)
    sp.add_argument("--resolution", type=float)
    sp.add_argument("--ratio-bound", type=float, dest="ratio_bound")
    sp.add_argument("--timing", action="store_true", help="record runtime_ms in the summary")
    common(sp, name_help=False)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="nodal length against sqrt(lambda)")
    sp.add_argument("--domain", required=True)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--source", default="auto", choices=("auto", "analytic", "fem"))
    sp.add_argument("--h", type=float)
    sp.add_argument("--resolution", type=float)
    sp.add_argument("--error-bars", action="store_true", dest="error_bars")
    sp.add_argument("--timing", action="store_true")
    common(sp, name_help=False)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
