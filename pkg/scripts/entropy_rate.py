"""Covering-number rate and d versus d_X comparison on the power-weight chain.

Prints the fitted exponent of N(T, d, eps), the worst upper/lower bracket
ratio, and the d_X / d entropy comparison on a fixed grid.
"""
import argparse
import time

import numpy as np

from treegauss.entropy import (chain_resolvable_range, covering_curve, entropy_equivalence_report,
                               fit_exponent, geometric_grid)
from treegauss.tree_core import build_chain
from treegauss.weights import power_chain_weights


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--depth", type=int, default=10 ** 5)
    ap.add_argument("--theta", type=float, default=1.0)
    ap.add_argument("--nu", type=float, default=2.0)
    ap.add_argument("--points", type=int, default=64)
    ap.add_argument("--compare-stop", type=float, default=1e-6,
                    help="smallest eps for the d_X comparison")
    args = ap.parse_args()

    tree = build_chain(args.depth)
    w = power_chain_weights(args.theta, args.nu)
    hi, lo = chain_resolvable_range(tree, w)
    t0 = time.time()
    curve = covering_curve(tree, w, geometric_grid(hi, lo, args.points), "d")
    slope = fit_exponent(curve.eps, curve.upper)
    print(f"eps range [{lo:.3e}, {hi:.3e}]  slope {slope:.4f}  expected {1 / (args.theta + args.nu):.4f}  "
          f"max upper/lower {np.max(curve.upper / curve.lower):.2f}  ({time.time() - t0:.1f}s)")

    t0 = time.time()
    rep = entropy_equivalence_report(tree, w, geometric_grid(min(1.0, hi), args.compare_stop, args.points))
    print(f"sup eps^2 log N: d {rep.sup_d:.4f}  d_X {rep.sup_dX:.4f}  factor {rep.sup_factor:.3f}  "
          f"N_dX/N_d growth {rep.ratio_growth:.2f}  ({time.time() - t0:.1f}s)")


if __name__ == "__main__":
    main()
