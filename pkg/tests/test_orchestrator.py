"""Run orchestration: persistence, resume, baselines, batch mode."""

import json
from pathlib import Path

import pytest

from evonav.gateway import ScriptedTransport, TransportFailure
from evonav import orchestrator
from evonav.orchestrator import (
    RunConfig,
    RunDirError,
    expert_curriculum,
    load_curriculum,
    load_run,
    run_baseline,
    run_batch,
    run_interactive,
)

E = "e" * 15


def arena_text(srow, scol, trow, tcol, walls=()):
    rows = [list(E) for _ in range(15)]
    for r, c in walls:
        rows[r][c] = "w"
    rows[srow][scol] = "s"
    rows[trow][tcol] = "t"
    return "|".join("".join(r) for r in rows)


def reply(case):
    return json.dumps({"case": case, "understood": "yes", "reasoning": "next"})


CASES = [
    arena_text(7, 5, 7, 9),
    arena_text(7, 4, 7, 10),
    arena_text(7, 4, 7, 10, walls=[(6, 7), (7, 7), (8, 7)]),
    arena_text(7, 3, 7, 11, walls=[(6, 7), (7, 7), (8, 7), (5, 7)]),
]
REPLIES = [reply(c) for c in CASES]


def small_config(**kw):
    base = dict(
        method="interactive-NP",
        seed=11,
        n_stage=3,
        evals_per_stage=200,
        transport={"kind": "scripted", "replies": REPLIES},
    )
    base.update(kw)
    return RunConfig(**base)


def tree_bytes(root: Path) -> dict:
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


# ---------------------------------------------------------------------------
# config


def test_config_validation():
    with pytest.raises(ValueError, match="method"):
        small_config(method="osmosis")
    with pytest.raises(ValueError, match="seed"):
        small_config(seed=-1)
    with pytest.raises(ValueError, match="n_stage"):
        small_config(n_stage=0)
    with pytest.raises(ValueError, match="evals_per_stage"):
        small_config(evals_per_stage=50)
    with pytest.raises(ValueError, match="threads"):
        small_config(threads=0)


def test_config_dict_round_trip():
    cfg = small_config(threads=2)
    d = cfg.to_dict()
    json.dumps(d)  # must be JSON-serializable as written
    assert RunConfig.from_dict(d) == cfg
    # defaults fill in for omitted keys
    minimal = RunConfig.from_dict({"method": "expert", "seed": 3})
    assert minimal.n_stage == 8
    assert minimal.evals_per_stage == 10_000


# ---------------------------------------------------------------------------
# interactive runs


def test_interactive_run_layout_and_reload(tmp_path):
    out = tmp_path / "run"
    config = small_config()
    rec = run_interactive(config, out, ScriptedTransport(REPLIES))

    assert [s.index for s in rec.stages] == [1, 2, 3]
    assert [len(s.bag) for s in rec.stages] == [1, 2, 3]
    assert [s.fallback for s in rec.stages] == [False, False, False]
    assert all(s.duration > 0 for s in rec.stages)
    # curriculum: the initial case plus the replies to stages 1 and 2;
    # stage 3's reply arrives but nothing trains on it
    assert [a.text for a in rec.curriculum] == CASES[:3]

    assert (out / "config.json").exists()
    assert (out / "initial.json").exists()
    assert (out / "summary.csv").exists()
    for i in (1, 2, 3):
        d = out / f"stage-{i}"
        for name in (
            "case.txt",
            "bag.txt",
            "archive.csv",
            "best.sexp",
            "progression.csv",
            "feedback.txt",
            "transcript.json",
            "response.json",
        ):
            assert (d / name).exists(), f"stage-{i}/{name}"
        # NP modality ships exactly the progression image
        assert (d / "feedback-progression.svg").exists()
        assert (d / "feedback-progression.png").exists()
        assert not list(d.glob("feedback-trajectory*"))

    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "stage,best_fitness,per_case,fallback"
    assert len(summary) == 4
    row = summary[1].split(",")
    assert int(row[0]) == 1 and row[3] == "0"
    assert float(row[1]) == rec.stages[0].best_eval.fitness

    reloaded = load_run(out)
    assert [s.best_eval.fitness for s in reloaded.stages] == [
        s.best_eval.fitness for s in rec.stages
    ]
    assert [s.best_eval.per_case for s in reloaded.stages] == [
        s.best_eval.per_case for s in rec.stages
    ]
    assert [a.text for a in reloaded.curriculum] == [a.text for a in rec.curriculum]
    # durations never persist, so reloads carry zero there
    assert [s.duration for s in reloaded.stages] == [0.0, 0.0, 0.0]


def test_crash_resume_is_byte_identical(tmp_path):
    config = small_config()
    a = tmp_path / "a"
    b = tmp_path / "b"
    run_interactive(config, a, ScriptedTransport(REPLIES))

    # the truncated script dies while requesting stage 2's next case
    with pytest.raises(TransportFailure):
        run_interactive(config, b, ScriptedTransport(REPLIES[:2]))
    assert (b / "stage-1" / "response.json").exists()
    assert not (b / "stage-2" / "response.json").exists()

    run_interactive(config, b, ScriptedTransport(REPLIES))
    assert tree_bytes(a) == tree_bytes(b)


def test_finished_run_reloads_without_transport(tmp_path):
    out = tmp_path / "run"
    config = small_config()
    rec = run_interactive(config, out, ScriptedTransport(REPLIES))
    # a finished run never touches the transport again
    again = run_interactive(config, out, ScriptedTransport([]))
    assert again.best_eval.fitness == rec.best_eval.fitness


def test_config_mismatch_is_rejected(tmp_path):
    out = tmp_path / "run"
    run_interactive(small_config(), out, ScriptedTransport(REPLIES))
    with pytest.raises(RunDirError, match="different configuration"):
        run_interactive(small_config(seed=12), out, ScriptedTransport(REPLIES))


def test_stage_dirs_without_initial_are_rejected(tmp_path):
    out = tmp_path / "run"
    config = small_config()
    run_interactive(config, out, ScriptedTransport(REPLIES))
    (out / "initial.json").unlink()
    with pytest.raises(RunDirError, match="no initial.json"):
        run_interactive(config, out, ScriptedTransport(REPLIES))


def test_fallback_after_bad_replies(tmp_path):
    # 3 failed attempts for the initial case, 3 more for stage 1's
    # next-case request; both fall back to random arenas
    config = small_config(
        n_stage=1, transport={"kind": "scripted", "replies": ["bad"] * 6}
    )
    rec = run_interactive(config, tmp_path / "run", ScriptedTransport(["bad"] * 6))
    initial = json.loads((tmp_path / "run" / "initial.json").read_text())
    assert initial["fallback"] is True
    assert len(rec.stages) == 1
    assert len(rec.stages[0].bag) == 1
    assert rec.stages[0].fallback is True
    summary = (tmp_path / "run" / "summary.csv").read_text().splitlines()
    assert summary[1].endswith(",1")


# ---------------------------------------------------------------------------
# baselines


def test_expert_baseline(tmp_path):
    config = RunConfig(method="expert", seed=5, n_stage=2, evals_per_stage=200)
    rec = run_baseline(config, tmp_path / "run")
    assert [s.case.text for s in rec.stages] == [
        a.text for a in expert_curriculum()[:2]
    ]
    marker = json.loads((tmp_path / "run" / "stage-1" / "response.json").read_text())
    assert marker == {"baseline": "expert"}
    names = {p.name for p in (tmp_path / "run" / "stage-1").iterdir()}
    assert "feedback.txt" not in names
    assert "transcript.json" not in names


def test_expert_baseline_stage_cap(tmp_path):
    config = RunConfig(method="expert", seed=5, n_stage=9, evals_per_stage=200)
    with pytest.raises(ValueError, match="8"):
        run_baseline(config, tmp_path / "run")


def test_random_baseline_deterministic(tmp_path):
    config = RunConfig(method="random", seed=5, n_stage=2, evals_per_stage=200)
    rec = run_baseline(config, tmp_path / "a")
    assert rec.stages[0].case.text != rec.stages[1].case.text
    rec2 = run_baseline(config, tmp_path / "b")
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    # rerun on a finished dir is a pure reload
    rec3 = run_baseline(config, tmp_path / "a")
    assert rec3.best_eval.fitness == rec.best_eval.fitness


def test_static_baseline_records_flags(tmp_path):
    cases = [a.text for a in expert_curriculum()[:2]]
    static_reply = json.dumps(
        {"cases": cases, "understood": "ok", "reasoning": "r"}
    )
    config = RunConfig(
        method="static",
        seed=5,
        n_stage=2,
        evals_per_stage=200,
        transport={"kind": "scripted", "replies": [static_reply]},
    )
    rec = run_baseline(config, tmp_path / "run", ScriptedTransport([static_reply]))
    initial = json.loads((tmp_path / "run" / "initial.json").read_text())
    assert initial["fallback_flags"] == [False, False]
    assert initial["cases"] == cases
    assert len(initial["transcript"]) == 1
    assert [s.fallback for s in rec.stages] == [False, False]
    reloaded = run_baseline(config, tmp_path / "run", ScriptedTransport([]))
    assert [s.fallback for s in reloaded.stages] == [False, False]


# ---------------------------------------------------------------------------
# batch


def test_batch_run_and_reload(tmp_path):
    curriculum = expert_curriculum()[:2]
    config = RunConfig(
        method="batch", seed=5, n_stage=2, evals_per_stage=200, batch_budget=400
    )
    rec = run_batch(config, tmp_path / "run", curriculum)
    assert [s.index for s in rec.stages] == [1]
    assert len(rec.stages[0].bag) == 2
    assert rec.stages[0].case.text == curriculum[0].text
    assert rec.stages[0].curve.checkpoints[-1].evaluations == 400
    initial = json.loads((tmp_path / "run" / "initial.json").read_text())
    assert initial["cases"] == [a.text for a in curriculum]

    rec2 = run_batch(config, tmp_path / "run", curriculum)
    assert rec2.best_eval.fitness == rec.best_eval.fitness

    with pytest.raises(RunDirError, match="different curriculum"):
        run_batch(config, tmp_path / "run", list(reversed(curriculum)))


def test_load_curriculum_requires_finished_run(tmp_path):
    config = RunConfig(method="expert", seed=5, n_stage=2, evals_per_stage=200)
    run_baseline(config, tmp_path / "run")
    cur = load_curriculum(tmp_path / "run")
    assert [c.text for c in cur] == [a.text for a in expert_curriculum()[:2]]

    (tmp_path / "run" / "stage-2" / "response.json").unlink()
    with pytest.raises(RunDirError, match="not a finished run"):
        load_curriculum(tmp_path / "run")


# ---------------------------------------------------------------------------
# packaged arenas


def test_packaged_curricula():
    expert = expert_curriculum()
    assert len(expert) == 8
    walls = [len(a.wall_tiles()) for a in expert]
    assert walls[0] == 0
    assert walls[-1] >= 15
    testset = orchestrator.testset_arenas()
    assert len(testset) == 6
    texts = {a.text for a in expert} | {a.text for a in testset}
    assert len(texts) == 14
