"""Measured (eta, nu) of the ideal denoiser along DDIM trajectories, per noise level.

The relative projection error at each step is what the error model bounds;
use the printed maxima to pick a schedule with ``distdiff schedule beta-star``.
"""
import argparse
import csv
import math
import sys

import numpy as np

from distdiff.analysis import error_model_fit
from distdiff.datasets import DatasetGenSpec, generate
from distdiff.denoisers import IdealDenoiser
from distdiff.samplers import SamplerSpec, child_rng, init_xN, run
from distdiff.schedules import build_loglinear


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="circle-samples")
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--m", type=int, default=256)
    ap.add_argument("--n-steps", type=int, default=20)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    K = generate(DatasetGenSpec(args.kind, args.n, args.m, args.seed))
    sched = build_loglinear(40.0, 0.01, args.n_steps)
    trajs = [run(SamplerSpec("ddim", terminal_full_step=False), sched, IdealDenoiser(K),
                 init_xN(40.0, K.dim, child_rng(args.seed, i, 0)), K) for i in range(args.trials)]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t", "sigma", "max_rel_error", "mean_rel_error", "min_ratio", "max_ratio"])
    for k in range(len(trajs[0].records) - 1):
        recs = [tr.records[k] for tr in trajs]
        rel = np.array([r.rel_proj_error for r in recs])
        ratio = np.array([r.ratio for r in recs])
        w.writerow([recs[0].t] + [f"{v:.17g}" for v in (recs[0].sigma, rel.max(), rel.mean(), ratio.min(), ratio.max())])
    eta_hat, nu_hat = error_model_fit(trajs)
    print(f"eta_hat {eta_hat:.4f}  nu_hat {nu_hat:.4f}  (sqrt(n) = {math.sqrt(K.dim):.3g})", file=sys.stderr)


if __name__ == "__main__":
    main()
