"""Convergence of the constant-step schedule ratios to their N -> infinity limits.

Writes eta, nu, N, (1-beta*)^N, its limit, (1+(eta-1)beta*)^N, its limit.
"""
import argparse
import csv
import sys

from distdiff.schedules import finite_ratios, limit_ratios


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", default="0.1:2,0.2:4,0.5:1.5", help="comma list of eta:nu")
    ap.add_argument("--n-steps", default="10,100,1000,10000,100000")
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["eta", "nu", "n_steps", "sigma_ratio", "sigma_ratio_limit", "distance_ratio", "distance_ratio_limit"])
    for pair in args.pairs.split(","):
        eta, nu = map(float, pair.split(":"))
        lim = limit_ratios(eta, nu)
        for N in map(int, args.n_steps.split(",")):
            fin = finite_ratios(eta, nu, N)
            w.writerow([eta, nu, N] + [f"{v:.17g}" for v in (fin[0], lim[0], fin[1], lim[1])])


if __name__ == "__main__":
    main()
