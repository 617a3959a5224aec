"""Compare two fixed-curriculum baselines with the stats machinery.

Trains the hand-designed curriculum and random curricula over a few
seeds each, then prints the per-stage quartile table and the exact
rank-test matrices on the held-out arenas. With the small default
budget the p-values say more about the machinery than the methods.
"""

import argparse
from pathlib import Path

from evonav.orchestrator import RunConfig, run_baseline, testset_arenas
from evonav.stats import stats_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=3, help="runs per method")
    ap.add_argument("--stages", type=int, default=3)
    ap.add_argument("--evals", type=int, default=500, help="evaluations per stage")
    ap.add_argument("--out", default="out/compare")
    args = ap.parse_args()

    root = Path(args.out)
    run_dirs = []
    for method in ("expert", "random"):
        for seed in range(args.seeds):
            config = RunConfig(
                method=method,
                seed=seed,
                n_stage=args.stages,
                evals_per_stage=args.evals,
            )
            d = root / f"{method}-{seed}"
            record = run_baseline(config, d)
            print(
                f"{method} seed {seed}: best fitness "
                f"{record.best_eval.fitness:.4f}"
            )
            run_dirs.append(d)

    print()
    report = stats_report(run_dirs, testset_arenas())
    print(report, end="")
    (root / "stats.txt").write_text(report)
    print(f"\nwrote {root / 'stats.txt'}")


if __name__ == "__main__":
    main()
