"""Cosine similarity between denoiser outputs along one ideal-denoiser trajectory.

Prints the matrix as CSV (rows and columns ordered t = N..1) and reports the
smallest entry on stderr.
"""
import argparse
import sys

import numpy as np

from distdiff.analysis import cosine_matrix
from distdiff.datasets import DatasetGenSpec, generate
from distdiff.denoisers import IdealDenoiser
from distdiff.samplers import SamplerSpec, child_rng, init_xN, run
from distdiff.schedules import build_loglinear


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="gaussian-blobs")
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--m", type=int, default=256)
    ap.add_argument("--n-steps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    K = generate(DatasetGenSpec(args.kind, args.n, args.m, args.seed))
    sched = build_loglinear(40.0, 0.01, args.n_steps)
    tr = run(SamplerSpec("ddim"), sched, IdealDenoiser(K), init_xN(40.0, K.dim, child_rng(args.seed, 0)), K)
    M = cosine_matrix(tr)
    np.savetxt(sys.stdout, M, delimiter=",", fmt="%.17g")
    print(f"minimum similarity {np.nanmin(M):.4f}", file=sys.stderr)


if __name__ == "__main__":
    main()
