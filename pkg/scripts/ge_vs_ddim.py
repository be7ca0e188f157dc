"""Paired comparison of gradient estimation (gamma = 2) and DDIM at N = 10.

Same starts for both samplers; reports mean terminal distance, wins and a
one-sided sign-test p-value per toy set.
"""
import argparse
import math

import numpy as np
from scipy.stats import binomtest

from distdiff.datasets import DatasetGenSpec, generate
from distdiff.denoisers import IdealDenoiser
from distdiff.samplers import SamplerSpec, child_rng, init_xN, run
from distdiff.schedules import build_ddim_linear, build_loglinear


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--n-steps", type=int, default=10)
    ap.add_argument("--gamma", type=float, default=2.0)
    args = ap.parse_args()
    N = args.n_steps
    sched = build_loglinear(40.0, 0.01, N, sigma_1=math.sqrt(build_ddim_linear(N).sigmas[1]))
    sets = {"circle": DatasetGenSpec("circle-samples", args.n, 256, 12),
            "2-sphere": DatasetGenSpec("sphere-samples", args.n, 256, 12, {"d": 2}),
            "blobs": DatasetGenSpec("gaussian-blobs", args.n, 256, 12)}
    print("set,ddim_mean,ge_mean,wins,losses,p_value")
    for name, spec in sets.items():
        K = generate(spec)
        den = IdealDenoiser(K)
        d, g = [], []
        for s in range(args.seeds):
            x = init_xN(40.0, K.dim, child_rng(s, 0))
            d.append(K.distance(run(SamplerSpec("ddim"), sched, den, x).final))
            g.append(K.distance(run(SamplerSpec("ge", gamma=args.gamma), sched, den, x).final))
        d, g = np.array(d), np.array(g)
        wins, losses = int((g < d).sum()), int((g > d).sum())
        p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue
        print(f"{name},{d.mean():.6g},{g.mean():.6g},{wins},{losses},{p:.3g}")


if __name__ == "__main__":
    main()
