"""Coefficient error of the true-DAG fit as the sample size grows.

    python3 scripts/fig2_rmse.py --replicates 20
"""

import argparse

from abnmle.experiments import coefficient_rmse


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--density", type=float, default=0.2)
    ap.add_argument("--sample-sizes", default="100,1000,10000")
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    res = coefficient_rmse(a.k, a.density, [int(s) for s in a.sample_sizes.split(",")], a.replicates, a.seed)
    print("n,mean_max_rmse")
    for n, v in res.items():
        print(f"{n},{v:.6f}")


if __name__ == "__main__":
    main()
