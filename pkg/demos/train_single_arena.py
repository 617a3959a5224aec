"""Train a navigation policy on one arena and look at what came out.

Runs MAP-Elites on a single case, prints the convergence curve, then
writes the archive, the best policy, and a trajectory image of that
policy driving the arena.
"""

import argparse
from pathlib import Path

import numpy as np

from evonav.feedback import render_trajectory
from evonav.optimizer import run_stage, save_archive, seed_population
from evonav.orchestrator import expert_curriculum
from evonav.policy import Controller, format_expr, size
from evonav.simulation import DEFAULT_PARAMS, run_episode
from evonav.cli import _read_arena


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--arena", help="arena text file (default: packaged stage 3)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--budget", type=int, default=5000, help="fitness evaluations")
    ap.add_argument("--out", default="out/single-arena")
    args = ap.parse_args()

    case = _read_arena(args.arena) if args.arena else expert_curriculum()[2]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(args.seed)
    seeds = seed_population(None, rng)
    result = run_stage(seeds, [case], args.budget, seed=args.seed)

    print("evaluations  best_fitness")
    for ck in result.curve.checkpoints:
        if ck.evaluations % 1000 == 0 or ck.evaluations == 100:
            print(f"{ck.evaluations:>11d}  {ck.best_fitness:.5f}")

    best = result.best_expr
    print(f"\narchive occupancy: {len(result.archive)}/100 cells")
    print(f"best policy ({size(best)} nodes): {format_expr(best)}")

    save_archive(result.archive, out / "archive.csv")
    (out / "best.sexp").write_text(format_expr(best) + "\n")
    log = run_episode(case, Controller(best, v_max=DEFAULT_PARAMS.v_max))
    art = render_trajectory(case, log, name="best-policy")
    (out / "best-policy.svg").write_text(art.svg)
    (out / "best-policy.png").write_bytes(art.png)
    print(f"final distance to target: {log.final_distance:.4f} m")
    print(f"wrote archive.csv, best.sexp, best-policy.svg/png under {out}")


if __name__ == "__main__":
    main()
