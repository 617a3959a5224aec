"""Progressive training runs: curriculum administration and persistence.

A run directory is the unit of truth.  `config.json` pins the settings,
`initial.json` records where the first case (or the whole predetermined
curriculum) came from, `stage-N/` holds everything stage N produced, and
`summary.csv` appears once the run finishes.  Inside a stage directory
`response.json` is written last through an atomic rename, so its
presence marks the stage complete; rerunning the same command in the
same directory resumes after the last complete stage.

Stage layout (interactive methods):

    stage-N/case.txt             newest case, canonical one-line text
    stage-N/bag.txt              all active cases, one per line
    stage-N/archive.csv          final elite archive
    stage-N/best.sexp            best policy of the stage
    stage-N/progression.csv      best-fitness checkpoints
    stage-N/feedback.txt         metrics block sent back to the model
    stage-N/feedback-*.svg/.png  attached images, when the modality has any
    stage-N/transcript.json      attempts of the next-case request
    stage-N/response.json        accepted response + next case (marker)

Baseline methods skip the feedback and transcript files and store a
`{"baseline": <method>}` marker instead.

Resume rebuilds the conversation from the stored transcripts as text
only; images attached to earlier feedback messages are not re-sent.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .arena import Arena, generate_random_arena, parse_arena
from .feedback import FeedbackPayload, build_feedback
from .gateway import (
    ChatMessage,
    contextualization_prompt,
    feedback_prompt,
    make_transport,
    request_case,
    request_static_cases,
    static_contextualization_prompt,
)
from .optimizer import (
    EliteArchive,
    Evaluation,
    load_archive,
    load_progression,
    run_stage,
    save_archive,
    save_progression,
    seed_population,
)
from .policy import Expr, format_expr, parse_expr
from .simulation import DEFAULT_PARAMS, SimParams

METHODS = (
    "interactive-N",
    "interactive-NP",
    "interactive-NPB",
    "expert",
    "static",
    "random",
    "batch",
)

BASELINE_METHODS = ("expert", "static", "random")


class RunDirError(RuntimeError):
    """The run directory contradicts the requested run."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs to be reproduced bit for bit.

    Parameters
    ----------
    method : str
        One of `METHODS`.  The interactive variants differ only in the
        feedback modality; expert/static/random train on predetermined
        curricula; batch spends the whole budget on one stage.
    seed : int
        Master seed.  Every random decision of the run is drawn from a
        stream derived from it, so two runs with equal configs and
        equal transport replies produce identical artifacts.
    transport : dict
        Settings understood by `gateway.make_transport`.  Ignored by
        methods that never talk to a model.
    """

    method: str
    seed: int
    n_stage: int = 8
    evals_per_stage: int = 10_000
    batch_budget: int = 40_000
    transport: dict = field(default_factory=dict)
    sim: SimParams = DEFAULT_PARAMS
    threads: int = 1

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.n_stage < 1:
            raise ValueError("n_stage must be at least 1")
        if self.evals_per_stage < 100:
            raise ValueError("evals_per_stage must be at least 100")
        if self.batch_budget < 100:
            raise ValueError("batch_budget must be at least 100")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def to_dict(self) -> dict:
        sim = self.sim
        return {
            "method": self.method,
            "seed": self.seed,
            "n_stage": self.n_stage,
            "evals_per_stage": self.evals_per_stage,
            "batch_budget": self.batch_budget,
            "transport": dict(self.transport),
            "threads": self.threads,
            "sim": {
                "v_max": sim.v_max,
                "dt": sim.dt,
                "robot_radius": sim.robot_radius,
                "axle_width": sim.axle_width,
                "n_steps": sim.n_steps,
                "sensor_range": sim.sensor_range,
                "ray_offsets": list(sim.ray_offsets),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        sim = data.get("sim", {})
        return cls(
            method=data["method"],
            seed=data["seed"],
            n_stage=data.get("n_stage", 8),
            evals_per_stage=data.get("evals_per_stage", 10_000),
            batch_budget=data.get("batch_budget", 40_000),
            transport=dict(data.get("transport", {})),
            threads=data.get("threads", 1),
            sim=SimParams(
                v_max=sim.get("v_max", DEFAULT_PARAMS.v_max),
                dt=sim.get("dt", DEFAULT_PARAMS.dt),
                robot_radius=sim.get("robot_radius", DEFAULT_PARAMS.robot_radius),
                axle_width=sim.get("axle_width", DEFAULT_PARAMS.axle_width),
                n_steps=sim.get("n_steps", DEFAULT_PARAMS.n_steps),
                sensor_range=sim.get("sensor_range", DEFAULT_PARAMS.sensor_range),
                ray_offsets=tuple(sim.get("ray_offsets", DEFAULT_PARAMS.ray_offsets)),
            ),
        )


@dataclass(frozen=True)
class StageRecord:
    """One completed stage.  `duration` is wall-clock seconds and is
    deliberately never written to disk, so reruns stay bit-identical."""

    index: int
    case: Arena
    bag: tuple[Arena, ...]
    archive: EliteArchive
    best_expr: Expr
    best_eval: Evaluation
    curve: object
    feedback_text: str | None
    response: dict | None
    next_case: str | None
    fallback: bool
    duration: float


@dataclass(frozen=True)
class RunRecord:
    config: RunConfig
    stages: tuple[StageRecord, ...]

    @property
    def curriculum(self) -> tuple[Arena, ...]:
        return self.stages[-1].bag if self.stages else ()

    @property
    def best_expr(self) -> Expr:
        return self.stages[-1].best_expr

    @property
    def best_eval(self) -> Evaluation:
        return self.stages[-1].best_eval


def _stage_seed(seed: int, tag: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, tag, index]).generate_state(1)[0])


def _asset_arena(rel: str) -> Arena:
    text = (resources.files("evonav") / "assets" / rel).read_text()
    return parse_arena("|".join(text.split()))


def expert_curriculum() -> tuple[Arena, ...]:
    """The eight hand-authored cases, easiest first."""
    return tuple(_asset_arena(f"expert/stage-{i}.txt") for i in range(1, 9))


def testset_arenas() -> tuple[Arena, ...]:
    """Six held-out cases no training method ever sees."""
    return tuple(_asset_arena(f"testset/case-{i}.txt") for i in range(1, 7))


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_marker(path: Path, payload) -> None:
    # the rename makes "marker exists" equivalent to "fully written"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _check_config(out: Path, config: RunConfig) -> None:
    path = out / "config.json"
    data = config.to_dict()
    if path.exists():
        if json.loads(path.read_text()) != data:
            raise RunDirError(
                f"{path} holds a different configuration; resume with the "
                "original settings or use a fresh directory"
            )
    else:
        _write_json(path, data)


def _persist_stage(
    stage_dir: Path,
    record: StageRecord,
    payload: FeedbackPayload | None = None,
    transcript=None,
) -> None:
    stage_dir.mkdir(parents=True, exist_ok=True)
    (stage_dir / "case.txt").write_text(record.case.text + "\n")
    (stage_dir / "bag.txt").write_text("".join(a.text + "\n" for a in record.bag))
    save_archive(record.archive, stage_dir / "archive.csv")
    (stage_dir / "best.sexp").write_text(format_expr(record.best_expr) + "\n")
    save_progression(record.curve, stage_dir / "progression.csv")
    if payload is not None:
        (stage_dir / "feedback.txt").write_text(payload.metrics_text + "\n")
        for img in payload.images():
            (stage_dir / (img.name + ".svg")).write_text(img.svg)
            (stage_dir / (img.name + ".png")).write_bytes(img.png)
    if transcript is not None:
        _write_json(stage_dir / "transcript.json", list(transcript))
    _write_marker(stage_dir / "response.json", record.response)


def _load_stage(stage_dir: Path, index: int) -> StageRecord:
    case = parse_arena((stage_dir / "case.txt").read_text().strip())
    bag = tuple(
        parse_arena(line)
        for line in (stage_dir / "bag.txt").read_text().splitlines()
        if line.strip()
    )
    archive = load_archive(stage_dir / "archive.csv")
    best_expr = parse_expr((stage_dir / "best.sexp").read_text().strip())
    curve = load_progression(stage_dir / "progression.csv")
    # the archive file drops per-case values; the last checkpoint of the
    # progression belongs to the same best policy and still has them
    last = curve.checkpoints[-1]
    _, best_in_archive, _ = archive.best()
    best_eval = Evaluation(
        last.best_fitness, tuple(last.per_case), best_in_archive.descriptors
    )
    response = json.loads((stage_dir / "response.json").read_text())
    feedback_path = stage_dir / "feedback.txt"
    feedback_text = feedback_path.read_text()[:-1] if feedback_path.exists() else None
    return StageRecord(
        index=index,
        case=case,
        bag=bag,
        archive=archive,
        best_expr=best_expr,
        best_eval=best_eval,
        curve=curve,
        feedback_text=feedback_text,
        response=response,
        next_case=response.get("next_case"),
        fallback=bool(response.get("fallback", False)),
        duration=0.0,
    )


def _history_from_transcript(transcript) -> list[ChatMessage]:
    # text-only reconstruction; images from old feedback messages are
    # not re-attached on resume
    messages = []
    for entry in transcript:
        if entry.get("fallback"):
            continue
        messages.append(ChatMessage("user", entry["sent"]["text"]))
        if entry.get("reply") is not None:
            messages.append(ChatMessage("assistant", entry["reply"]))
    return messages


def _count_replies(transcript) -> int:
    return sum(1 for entry in transcript if entry.get("reply") is not None)


def _completed_prefix(out: Path, config: RunConfig) -> list[StageRecord]:
    stages = []
    for i in range(1, config.n_stage + 1):
        stage_dir = out / f"stage-{i}"
        if not (stage_dir / "response.json").exists():
            break
        stages.append(_load_stage(stage_dir, i))
    return stages


def _write_summary(out: Path, stages) -> None:
    lines = ["stage,best_fitness,per_case,fallback"]
    for s in stages:
        per = ";".join(repr(v) for v in s.best_eval.per_case)
        lines.append(f"{s.index},{s.best_eval.fitness!r},{per},{int(s.fallback)}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n")


def _run_one_stage(config: RunConfig, index: int, bag, prev_archive):
    seeds = seed_population(
        prev_archive, np.random.default_rng([config.seed, 3, index])
    )
    budget = (
        config.batch_budget if config.method == "batch" else config.evals_per_stage
    )
    return run_stage(
        seeds,
        list(bag),
        budget,
        _stage_seed(config.seed, 4, index),
        params=config.sim,
        threads=config.threads,
    )


def run_interactive(config: RunConfig, out_dir, transport=None) -> RunRecord:
    """Run (or resume) a full interactive session.

    Each stage optimizes on the bag of cases so far, reports feedback
    in the configured modality, and asks the model for the next case;
    the final stage's response is recorded but no further stage is
    trained on it.
    """
    if not config.method.startswith("interactive-"):
        raise ValueError(f"run_interactive needs an interactive method, got {config.method!r}")
    modality = config.method.split("-", 1)[1]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _check_config(out, config)
    if transport is None:
        transport = make_transport(config.transport)

    history: list[ChatMessage] = []
    consumed = 0
    initial = None
    initial_path = out / "initial.json"
    if initial_path.exists():
        initial = json.loads(initial_path.read_text())
        history.extend(_history_from_transcript(initial["transcript"]))
        consumed += _count_replies(initial["transcript"])

    stages = _completed_prefix(out, config)
    if stages and initial is None:
        raise RunDirError(f"{out} has stage directories but no initial.json")
    for record in stages:
        transcript = json.loads(
            (out / f"stage-{record.index}" / "transcript.json").read_text()
        )
        history.extend(_history_from_transcript(transcript))
        consumed += _count_replies(transcript)

    if consumed and hasattr(transport, "skip"):
        transport.skip(consumed)

    if initial is None:
        message = contextualization_prompt(config.n_stage, modality)
        outcome = request_case(
            transport, history, message, np.random.default_rng([config.seed, 2, 0])
        )
        initial = {
            "case": outcome.arena.text,
            "fallback": outcome.fallback,
            "transcript": list(outcome.transcript),
        }
        _write_marker(initial_path, initial)

    if stages:
        case = parse_arena(stages[-1].next_case)
    else:
        case = parse_arena(initial["case"])

    for i in range(len(stages) + 1, config.n_stage + 1):
        start = time.perf_counter()
        bag = tuple(s.case for s in stages) + (case,)
        prev_archive = stages[-1].archive if stages else None
        result = _run_one_stage(config, i, bag, prev_archive)
        partial = StageRecord(
            index=i,
            case=case,
            bag=bag,
            archive=result.archive,
            best_expr=result.best_expr,
            best_eval=result.best_eval,
            curve=result.curve,
            feedback_text=None,
            response=None,
            next_case=None,
            fallback=False,
            duration=0.0,
        )
        payload = build_feedback(modality, partial, prior_stages=stages, params=config.sim)
        message = feedback_prompt(payload)
        outcome = request_case(
            transport, history, message, np.random.default_rng([config.seed, 2, i])
        )
        parsed = outcome.response
        record = replace(
            partial,
            feedback_text=payload.metrics_text,
            response={
                "fallback": outcome.fallback,
                "next_case": outcome.arena.text,
                "case": parsed.case if parsed else None,
                "understood": parsed.understood if parsed else None,
                "reasoning": parsed.reasoning if parsed else None,
            },
            next_case=outcome.arena.text,
            fallback=outcome.fallback,
            duration=time.perf_counter() - start,
        )
        _persist_stage(out / f"stage-{i}", record, payload, outcome.transcript)
        stages.append(record)
        case = outcome.arena

    _write_summary(out, stages)
    return RunRecord(config, tuple(stages))


def run_baseline(config: RunConfig, out_dir, transport=None) -> RunRecord:
    """Train on a predetermined curriculum, one case added per stage,
    with no feedback loop.  expert reads the packaged cases, random
    samples arenas, static asks the model for the whole curriculum up
    front (invalid slots fall back to random arenas)."""
    if config.method not in BASELINE_METHODS:
        raise ValueError(
            f"run_baseline needs one of {BASELINE_METHODS}, got {config.method!r}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _check_config(out, config)

    initial_path = out / "initial.json"
    if initial_path.exists():
        initial = json.loads(initial_path.read_text())
    else:
        if config.method == "expert":
            bank = expert_curriculum()
            if config.n_stage > len(bank):
                raise ValueError(
                    f"the expert curriculum has {len(bank)} cases, "
                    f"n_stage={config.n_stage} asks for more"
                )
            initial = {
                "cases": [a.text for a in bank[: config.n_stage]],
                "fallback_flags": [False] * config.n_stage,
            }
        elif config.method == "random":
            rng = np.random.default_rng([config.seed, 2, 0])
            initial = {
                "cases": [
                    generate_random_arena(rng).text for _ in range(config.n_stage)
                ],
                "fallback_flags": [False] * config.n_stage,
            }
        else:
            if transport is None:
                transport = make_transport(config.transport)
            outcome = request_static_cases(
                transport,
                [],
                static_contextualization_prompt(config.n_stage),
                config.n_stage,
                np.random.default_rng([config.seed, 2, 0]),
            )
            initial = {
                "cases": [a.text for a in outcome.cases],
                "fallback_flags": list(outcome.fallback_flags),
                "transcript": list(outcome.transcript),
            }
        _write_marker(initial_path, initial)

    curriculum = tuple(parse_arena(text) for text in initial["cases"])
    flags = initial.get("fallback_flags", [False] * config.n_stage)

    stages = _completed_prefix(out, config)
    stages = [replace(s, fallback=bool(flags[s.index - 1])) for s in stages]

    for i in range(len(stages) + 1, config.n_stage + 1):
        start = time.perf_counter()
        bag = curriculum[:i]
        prev_archive = stages[-1].archive if stages else None
        result = _run_one_stage(config, i, bag, prev_archive)
        record = StageRecord(
            index=i,
            case=curriculum[i - 1],
            bag=bag,
            archive=result.archive,
            best_expr=result.best_expr,
            best_eval=result.best_eval,
            curve=result.curve,
            feedback_text=None,
            response={"baseline": config.method},
            next_case=None,
            fallback=bool(flags[i - 1]),
            duration=time.perf_counter() - start,
        )
        _persist_stage(out / f"stage-{i}", record)
        stages.append(record)

    _write_summary(out, stages)
    return RunRecord(config, tuple(stages))


def run_batch(config: RunConfig, out_dir, curriculum) -> RunRecord:
    """Spend the whole batch budget on a single stage whose bag is the
    full curriculum.  `case.txt` holds the curriculum's first case so
    the stage directory stays shaped like every other one."""
    if config.method != "batch":
        raise ValueError(f"run_batch needs method 'batch', got {config.method!r}")
    curriculum = tuple(curriculum)
    if not curriculum:
        raise ValueError("batch training needs a non-empty curriculum")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _check_config(out, config)

    initial_path = out / "initial.json"
    if initial_path.exists():
        initial = json.loads(initial_path.read_text())
        if initial["cases"] != [a.text for a in curriculum]:
            raise RunDirError(f"{out} was started with a different curriculum")
    else:
        _write_marker(initial_path, {"cases": [a.text for a in curriculum]})

    stage_dir = out / "stage-1"
    if (stage_dir / "response.json").exists():
        stages = [_load_stage(stage_dir, 1)]
    else:
        start = time.perf_counter()
        result = _run_one_stage(config, 1, curriculum, None)
        record = StageRecord(
            index=1,
            case=curriculum[0],
            bag=curriculum,
            archive=result.archive,
            best_expr=result.best_expr,
            best_eval=result.best_eval,
            curve=result.curve,
            feedback_text=None,
            response={"baseline": config.method},
            next_case=None,
            fallback=False,
            duration=time.perf_counter() - start,
        )
        _persist_stage(stage_dir, record)
        stages = [record]

    _write_summary(out, stages)
    return RunRecord(config, tuple(stages))


def load_curriculum(run_dir) -> tuple[Arena, ...]:
    """The cases a finished run trained on, in stage order."""
    out = Path(run_dir)
    config = RunConfig.from_dict(json.loads((out / "config.json").read_text()))
    record = load_run(out)
    if len(record.stages) < (1 if config.method == "batch" else config.n_stage):
        raise RunDirError(f"{out} is not a finished run")
    return record.curriculum


def load_run(run_dir) -> RunRecord:
    """Reload a run directory written by any of the run_* entry points."""
    out = Path(run_dir)
    config = RunConfig.from_dict(json.loads((out / "config.json").read_text()))
    return RunRecord(config, tuple(_completed_prefix(out, config)))
