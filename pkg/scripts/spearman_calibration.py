"""Monte Carlo size and power of the Spearman t-test.

For each sample size, draws ``--trials`` bivariate normal samples with the
given population correlation and reports how often p < alpha. With
``--rho 0`` the rate should sit near alpha.

    python scripts/spearman_calibration.py --n 10 20 50 --rho 0 0.3
"""

import argparse

import numpy as np

from wsiseg.stats import correlate


def rejection_rate(n: int, rho: float, trials: int, alpha: float, rng) -> float:
    cov = [[1.0, rho], [rho, 1.0]]
    hits = 0
    for _ in range(trials):
        x, y = rng.multivariate_normal([0.0, 0.0], cov, size=n).T
        res = correlate(x, y, alpha)
        hits += res.p is not None and res.p < alpha
    return hits / trials


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[10, 20, 50, 100])
    p.add_argument("--rho", type=float, nargs="+", default=[0.0, 0.3, 0.6])
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'n':>5} " + " ".join(f"rho={r:<5g}" for r in args.rho))
    for n in args.n:
        rates = [rejection_rate(n, r, args.trials, args.alpha, rng) for r in args.rho]
        print(f"{n:>5} " + " ".join(f"{x:>9.3f}" for x in rates))


if __name__ == "__main__":
    main()
