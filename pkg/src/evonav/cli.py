"""Command line entry point.

Subcommands: run (interactive pipeline), baseline (expert | static |
random), batch (replay a saved curriculum with the whole budget in one
stage), eval (score policies or an archive on a set of arenas), stats
(comparison tables over finished runs), render (arena or trajectory to
SVG/PNG).  Every failure exits nonzero with a one-line diagnostic.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .arena import Arena, parse_arena
from .feedback import render_arena, render_trajectory
from .optimizer import load_archive
from .orchestrator import (
    BASELINE_METHODS,
    RunConfig,
    load_curriculum,
    run_baseline,
    run_batch,
    run_interactive,
    testset_arenas,
)
from .policy import parse_expr
from .simulation import load_trajectory
from .stats import eval_policies, stats_report


def _read_arena(path) -> Arena:
    # accept both the canonical one-line form and 15 plain lines
    return parse_arena("|".join(Path(path).read_text().split()))


def _load_arenas(paths) -> list[tuple[str, Arena]]:
    arenas = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            files = sorted(p.glob("*.txt"))
            if not files:
                raise FileNotFoundError(f"no *.txt arenas in {p}")
            arenas.extend((f.stem, _read_arena(f)) for f in files)
        else:
            arenas.append((p.stem, _read_arena(p)))
    return arenas


def _build_config(args, method: str) -> RunConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    data["method"] = method
    if args.seed is not None:
        data["seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    if getattr(args, "stages", None) is not None:
        data["n_stage"] = args.stages
    if getattr(args, "evals", None) is not None:
        data["evals_per_stage"] = args.evals
    if getattr(args, "budget", None) is not None:
        data["batch_budget"] = args.budget
    if "seed" not in data:
        raise ValueError("a seed is required (--seed or the config file)")
    return RunConfig.from_dict(data)


def _require_out(args) -> Path:
    if args.out is None:
        raise ValueError("--out is required for this command")
    return Path(args.out)


def _cmd_run(args) -> int:
    method = args.config and json.loads(Path(args.config).read_text()).get("method")
    if args.modality is not None:
        method = "interactive-" + args.modality
    if method is None:
        raise ValueError("pick a modality (--modality N|NP|NPB or config file)")
    config = _build_config(args, method)
    if not config.transport:
        raise ValueError('run needs transport settings (config file key "transport")')
    record = run_interactive(config, _require_out(args))
    print(
        f"run complete: {len(record.stages)} stages, "
        f"best fitness {record.best_eval.fitness:.6g}"
    )
    return 0


def _cmd_baseline(args) -> int:
    config = _build_config(args, args.method)
    if args.method == "static" and not config.transport:
        raise ValueError(
            'the static baseline needs transport settings (config file key "transport")'
        )
    record = run_baseline(config, _require_out(args))
    print(
        f"{args.method} baseline complete: {len(record.stages)} stages, "
        f"best fitness {record.best_eval.fitness:.6g}"
    )
    return 0


def _cmd_batch(args) -> int:
    curriculum = load_curriculum(args.replay)
    config = _build_config(args, "batch")
    record = run_batch(config, _require_out(args), curriculum)
    print(
        f"batch run complete: {len(curriculum)} cases, "
        f"best fitness {record.best_eval.fitness:.6g}"
    )
    return 0


def _cmd_eval(args) -> int:
    policies = []
    for path in args.policy:
        p = Path(path)
        policies.append((p.stem, parse_expr(p.read_text().strip())))
    if args.archive:
        archive = load_archive(args.archive)
        for (row, col), expr, _ in archive.occupants():
            policies.append((f"cell_{row}_{col}", expr))
    if not policies:
        raise ValueError("nothing to evaluate; pass --policy and/or --archive")
    named = _load_arenas(args.arenas)
    rows = eval_policies(policies, [a for _, a in named])
    lines = ["policy,fitness," + ",".join(name for name, _ in named)]
    for label, fitness, per_case in rows:
        lines.append(f"{label},{fitness!r}," + ",".join(repr(v) for v in per_case))
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.csv").write_text(table)
    return 0


def _cmd_stats(args) -> int:
    if len(args.run_dirs) < 2:
        raise ValueError("stats needs at least two run directories to compare")
    if args.arenas:
        arenas = [a for _, a in _load_arenas(args.arenas)]
    else:
        arenas = list(testset_arenas())
    report = stats_report(args.run_dirs, arenas)
    sys.stdout.write(report)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.txt").write_text(report)
    return 0


def _cmd_render(args) -> int:
    if args.out is None:
        raise ValueError("--out is required (target .svg or .png file)")
    out = Path(args.out)
    arena = _read_arena(args.arena)
    if args.trajectory:
        image = render_trajectory(arena, load_trajectory(args.trajectory), name=out.stem)
    else:
        image = render_arena(arena, name=out.stem)
    if out.suffix.lower() == ".png":
        out.write_bytes(image.png)
    else:
        out.write_text(image.svg)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with run settings")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory (or file for render)")
    common.add_argument("--threads", type=int, help="episode worker threads")

    parser = argparse.ArgumentParser(
        prog="evonav",
        description="curriculum experiments for evolved robot navigation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common], help="interactive training run")
    p_run.add_argument("--modality", choices=["N", "NP", "NPB"])
    p_run.add_argument("--stages", type=int, help="number of stages")
    p_run.add_argument("--evals", type=int, help="evaluations per stage")
    p_run.set_defaults(func=_cmd_run)

    p_base = sub.add_parser("baseline", parents=[common], help="fixed-curriculum run")
    p_base.add_argument("method", choices=list(BASELINE_METHODS))
    p_base.add_argument("--stages", type=int, help="number of stages")
    p_base.add_argument("--evals", type=int, help="evaluations per stage")
    p_base.set_defaults(func=_cmd_baseline)

    p_batch = sub.add_parser("batch", parents=[common], help="whole budget, one stage")
    p_batch.add_argument(
        "--replay", required=True, help="finished run directory to take the curriculum from"
    )
    p_batch.add_argument("--budget", type=int, help="total evaluations")
    p_batch.set_defaults(func=_cmd_batch)

    p_eval = sub.add_parser("eval", parents=[common], help="score policies on arenas")
    p_eval.add_argument("--policy", action="append", default=[], help="policy .sexp file")
    p_eval.add_argument("--archive", help="archive.csv to evaluate whole")
    p_eval.add_argument(
        "--arenas", nargs="+", required=True, help="arena files or directories"
    )
    p_eval.set_defaults(func=_cmd_eval)

    p_stats = sub.add_parser("stats", parents=[common], help="comparison tables")
    p_stats.add_argument("run_dirs", nargs="+", help="finished run directories")
    p_stats.add_argument(
        "--arenas", nargs="*", help="held-out arenas (default: packaged test set)"
    )
    p_stats.set_defaults(func=_cmd_stats)

    p_render = sub.add_parser("render", parents=[common], help="draw arena or trajectory")
    p_render.add_argument("--arena", required=True, help="arena text file")
    p_render.add_argument("--trajectory", help="trajectory .csv to overlay")
    p_render.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
