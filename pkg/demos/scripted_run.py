"""Walk through the interactive pipeline without a language model.

A scripted transport stands in for the case designer, replying with a
fixed sequence of arenas that move the target further out and then add
a wall. The run directory it leaves behind has the exact same layout a
live run produces, so this doubles as a tour of the on-disk contract.
Run it twice with the same arguments to see the resume path: finished
stages reload instead of recomputing.
"""

import argparse
import json
from pathlib import Path

from evonav.orchestrator import RunConfig, load_run, run_interactive

OPEN = ["e" * 15 for _ in range(15)]


def arena(start_col, target_col, wall_cols=()):
    rows = [list(r) for r in OPEN]
    for c in wall_cols:
        for r in (6, 7, 8):
            rows[r][c] = "w"  # three-tile vertical wall
    rows[3][start_col] = "s"
    rows[3][target_col] = "t"
    return "|".join("".join(r) for r in rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--evals", type=int, default=1000, help="evaluations per stage")
    ap.add_argument("--out", default="out/scripted-run")
    args = ap.parse_args()

    cases = [
        arena(5, 9),
        arena(4, 10),
        arena(3, 11),
        arena(3, 11, wall_cols=(7,)),  # stage 3's reply, recorded but unused
    ]
    replies = [
        json.dumps({"case": c, "understood": "yes", "reasoning": "step up"})
        for c in cases
    ]
    config = RunConfig(
        method="interactive-NPB",
        seed=args.seed,
        n_stage=3,
        evals_per_stage=args.evals,
        transport={"kind": "scripted", "replies": replies},
    )

    record = run_interactive(config, args.out)
    for stage in record.stages:
        print(
            f"stage {stage.index}: bag {len(stage.bag)}, "
            f"best fitness {stage.best_eval.fitness:.4f}, "
            f"fallback {stage.fallback}"
        )

    out = Path(args.out)
    print("\nrun directory:")
    for p in sorted(out.rglob("*")):
        if p.is_file():
            print(" ", p.relative_to(out))

    # load_run gives the same record back from disk alone
    reloaded = load_run(out)
    assert reloaded.best_eval.fitness == record.best_eval.fitness
    print(f"\nreloaded best fitness matches: {reloaded.best_eval.fitness:.4f}")


if __name__ == "__main__":
    main()
