"""Doubling-index profiles N(x, r) = ln(H(x, 2r) / H(x, r)) for a few model fields.

Homogeneous harmonic polynomials have constant profiles (2k + 2) ln 2.
A mixture of degrees climbs from the lowest degree's value towards the
highest one. At the vertex of a boundary sector the profile is constant
and reads off the exponent of the sector's positive harmonic function.

    python3 demos/doubling_profiles.py --out demo_out/doubling
"""

import argparse
import math
import os

from nodalab.doubling import doubling_profile
from nodalab.fields import HarmonicPolynomialField, RectangleMode, make_extension
from nodalab.verify import sector_case

LN2 = math.log(2)


def show(title, rep, path):
    rep.write_csv(path)
    print(title)
    for r, N in zip(rep.radii, rep.N_values):
        print(f"    r={r:9.5f}  N={N:9.5f}  N/ln2={N / LN2:7.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo_out/doubling")
    ap.add_argument("--steps", type=int, default=6)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    out = lambda name: os.path.join(args.out, name)

    h = HarmonicPolynomialField.re_power(3)
    show("Re(z^3) at 0: expect 8 ln 2 at every radius",
         doubling_profile(h, (0, 0), 0.01, 1.0, args.steps), out("re_z3.csv"))

    mix = HarmonicPolynomialField([0.0, 1.0, 0.0, 0.0, 0.1])
    show("Re(z) + 0.1 Re(z^4) at 0: climbs from 4 ln 2 towards 10 ln 2",
         doubling_profile(mix, (0, 0), 0.01, 3.0, args.steps), out("mixed.csv"))

    for reflex in (False, True):
        patch, s, beta = sector_case(0.2, reflex)
        kind = "reflex" if reflex else "convex"
        show(f"{kind} sector vertex, beta = {beta:.4f}: expect (2 beta + 2) ln 2 = "
             f"{(2 * beta + 2) * LN2:.5f}",
             doubling_profile(s, (0, 0), 0.002, 0.05, args.steps, patch), out(f"sector_{kind}.csv"))

    u = RectangleMode(3, 2)
    ext = make_extension(u, u.lam)
    show("extension of the (3,2) square mode at (0.5, 0.5, 0): grows like sqrt(lambda) r",
         doubling_profile(ext, (0.5, 0.5, 0.0), 0.01, 0.2, args.steps), out("extension.csv"))
    print(f"CSVs written to {args.out}")


if __name__ == "__main__":
    main()
