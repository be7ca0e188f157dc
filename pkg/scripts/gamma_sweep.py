"""Terminal distance against gamma for the gradient-estimation sampler.

Two settings: the ideal denoiser (``--denoiser ideal``) and an exact
projection corrupted by a fixed error direction (``--denoiser correlated``),
where extrapolating past gamma = 1 cancels the shared error.
"""
import argparse
import math
import sys

import numpy as np

from distdiff.analysis import gamma_sweep
from distdiff.datasets import DatasetGenSpec, generate
from distdiff.denoisers import ErrorInjectedDenoiser, ExactProjectionDenoiser, IdealDenoiser
from distdiff.schedules import build_ddim_linear, build_loglinear


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--denoiser", choices=("ideal", "correlated"), default="ideal")
    ap.add_argument("--kind", default="circle-samples")
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--m", type=int, default=256)
    ap.add_argument("--gammas", default="0.5,1,1.5,2,2.5,3")
    ap.add_argument("--n-steps", default="5,10,20,50")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--eta", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    K = generate(DatasetGenSpec(args.kind, args.n, args.m, args.seed))
    gammas = [float(g) for g in args.gammas.split(",")]
    Ns = [int(v) for v in args.n_steps.split(",")]
    if args.denoiser == "ideal":
        make = lambda i: IdealDenoiser(K)  # noqa: E731
        sched = lambda N: build_loglinear(40.0, 0.01, N, math.sqrt(build_ddim_linear(N).sigmas[1]))  # noqa: E731
        rows = gamma_sweep(K, make, sched, gammas, Ns, args.trials, args.seed)
    else:
        u = np.ones(K.dim)
        make = lambda i: ErrorInjectedDenoiser(ExactProjectionDenoiser(K), K, args.eta, "fixed-vector",  # noqa: E731
                                               direction=u)
        rows = gamma_sweep(K, make, lambda N: build_loglinear(10.0, 0.01, N), gammas, Ns, args.trials, args.seed,
                           init="exact-distance", terminal_full_step=False)
    print("n_steps,gamma,mean_terminal_distance,mean_terminal_rel_error,trials")
    for r in rows:
        print(f"{r.n_steps},{r.gamma},{r.mean_terminal_distance:.17g},{r.mean_terminal_rel_error:.17g},{r.trials}")
    for N in Ns:
        best = min((r for r in rows if r.n_steps == N), key=lambda r: r.mean_terminal_distance)
        print(f"N={N}: best gamma {best.gamma}", file=sys.stderr)


if __name__ == "__main__":
    main()
