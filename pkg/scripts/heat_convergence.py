"""Heat-flow convergence table against exp(-pi^2 t) sin(pi x).

    python scripts/heat_convergence.py --levels 4 --out heat_convergence.csv
"""

import argparse
import csv
import sys

import numpy as np

from varexp import exponent as ex
from varexp.grid import Grid
from varexp.stepper import ForcingSpec, run


def max_l2_error(cells: int, N: int, T: float) -> float:
    g = Grid.unit(cells)
    two = ex.constant(g, 2.0)
    x = g.coords[:, 0]
    u0 = np.sin(np.pi * x)
    u0[g.boundary] = 0.0
    rep = run(u0, ForcingSpec(), T, N, two, two)
    exact = lambda t: np.exp(-np.pi**2 * t) * np.sin(np.pi * x)
    return max(np.sqrt(np.dot(g.weights, (u - exact(t)) ** 2)) for t, u in zip(rep.times, rep.states))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=64)
    ap.add_argument("--N", type=int, default=50)
    ap.add_argument("--T", type=float, default=0.5)
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--out", default=None)
    args = ap.parse_args(argv)
    rows, prev = [], None
    for k in range(args.levels):
        cells, N = args.cells * 2**k, args.N * 2**k
        err = max_l2_error(cells, N, args.T)
        rows.append((cells, N, err, prev / err if prev else float("nan")))
        prev = err
    w = csv.writer(open(args.out, "w", newline="") if args.out else sys.stdout)
    w.writerow(["cells", "N", "max_l2_error", "ratio"])
    w.writerows(rows)


if __name__ == "__main__":
    main()
