"""Growth of E sup|X| with truncation depth for the bounded/unbounded pair.

Fits mean sup against log2(depth) for both weight systems and prints the
slopes, residuals and the depth-22/depth-10 ratio.  The acceptance
thresholds for this contrast were frozen from this script's output.
"""
import argparse
import time

import numpy as np

from treegauss.gauss_sim import SimConfig, estimate_esup
from treegauss.rng import DEFAULT_SEED
from treegauss.tree_core import build_binary
from treegauss.weights import decaying_sigma_weights, decaying_alpha_weights


def growth_fit(depths, means):
    x = np.log2(np.asarray(depths, dtype=float))
    coef, res, *_ = np.polyfit(x, means, 1, full=True)
    resid = float(np.sqrt(res[0] / len(x))) if res.size else 0.0
    return float(coef[0]), resid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicas", type=int, default=100)
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
    ap.add_argument("--depths", default="10,14,18,22")
    args = ap.parse_args()
    depths = [int(d) for d in args.depths.split(",")]
    tree = build_binary(max(depths))
    for name, w in (("bounded", decaying_sigma_weights()), ("unbounded", decaying_alpha_weights())):
        t0 = time.time()
        est = estimate_esup(SimConfig(tree, w, args.replicas, args.seed, depths))
        slope, resid = growth_fit(depths, est.mean)
        print(f"{name:9s} means={np.round(est.mean, 4).tolist()} stderr={np.round(est.stderr, 4).tolist()} "
              f"slope={slope:.4f} resid={resid:.4f} ratio={est.mean[-1] / est.mean[0]:.3f} "
              f"({time.time() - t0:.1f}s)")


if __name__ == "__main__":
    main()
