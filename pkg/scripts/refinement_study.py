"""Refinement study for one exponent pair: telescoped chain-rule gap,
log-Hoelder constant of m and the discrete Poincare constant.

    python scripts/refinement_study.py --p-amp 0.4 --m-amp 0.5 --levels 3
"""

import argparse
import csv
import math
import sys

import numpy as np

from varexp import diagnostics as dg
from varexp import exponent as ex
from varexp.energy import poincare_constant
from varexp.grid import Grid
from varexp.stepper import ForcingSpec, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p-base", type=float, default=2.5)
    ap.add_argument("--p-amp", type=float, default=0.4)
    ap.add_argument("--m-base", type=float, default=2.0)
    ap.add_argument("--m-amp", type=float, default=0.5)
    ap.add_argument("--cells", type=int, default=32)
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--T", type=float, default=0.5)
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--forcing-amp", type=float, default=0.0)
    args = ap.parse_args(argv)
    spec = ForcingSpec("sine", "poly", args.forcing_amp, coeffs=(1.0, 1.0))
    w = csv.writer(sys.stdout)
    w.writerow(["cells", "N", "telescoped_gap", "gap_ratio", "log_holder_A", "poincare", "violations"])
    prev = None
    for k in range(args.levels):
        g = Grid.unit(args.cells * 2**k)
        p = ex.sine(g, args.p_base, args.p_amp)
        m = ex.affine(g, args.m_base, args.m_amp)
        u0 = np.sin(np.pi * g.coords[:, 0])
        u0[g.boundary] = 0.0
        rep = run(u0, spec, args.T, args.N * 2**k, p, m)
        gap = dg.telescoped_gap(rep)
        stats = dg.summarize(dg.full_report(rep))
        a = ex.log_holder_check(m, math.inf).required_A
        w.writerow([g.n_cells, rep.N, gap, prev / gap if prev else "", a, poincare_constant(g, m), stats["violations"]])
        prev = gap


if __name__ == "__main__":
    main()
