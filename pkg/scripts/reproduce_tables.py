"""Run the Laplacian correlation experiment and print it next to the published tables.

    python3 scripts/reproduce_tables.py [--trials 20] [--seed 0] [--csv out.csv]
"""

import argparse
import time

from wquant.experiments import DistributionSpec, emit_csv, fit_x0_regression, lookup, run_table_experiment
from wquant.reference import BEST_X0_SIGMA, MAX_RHO, METHODS


def show(title, stats, ref, attr, tol):
    print(f"\n{title}")
    print(f"{'B':>2} {'method':<18} {'ours':>9} {'published':>9} {'tol':>7}  ok")
    for bits in range(2, 7):
        for scheme, rounding in METHODS:
            mean, spread = ref[(bits, scheme, rounding)]
            ours = getattr(lookup(stats, bits, scheme, rounding), attr)
            t = tol(mean, spread)
            print(f"{bits:>2} {scheme + '/' + rounding:<18} {ours:9.5f} {mean:9.5f} {t:7.4f}  "
                  f"{'yes' if abs(ours - mean) <= t else 'NO'}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--csv")
    args = ap.parse_args()

    t = time.perf_counter()
    stats = run_table_experiment(DistributionSpec(seed=args.seed), range(2, 7), args.trials, threads=args.threads)
    print(f"{args.trials} trials in {time.perf_counter() - t:.1f}s")
    show("best correlation", stats, MAX_RHO, "mean_rho", lambda m, s: max(3 * s, 0.01))
    show("best x0 / sigma", stats, BEST_X0_SIGMA, "mean_x0_sigma", lambda m, s: max(3 * s, 0.15 * m))
    fit = fit_x0_regression(stats)
    print(f"\nlog2(x0/sigma) vs B, exponential/ceil: slope {fit.slope:.3f}, intercept {fit.intercept:.3f}, "
          f"r^2 {fit.r_squared:.4f}")
    if args.csv:
        emit_csv(stats, args.csv)


if __name__ == "__main__":
    main()
