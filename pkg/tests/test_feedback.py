"""Feedback assembly: metric text, convergence plot, trajectory images."""

import xml.dom.minidom
from dataclasses import dataclass

import pytest

from evonav.feedback import (
    build_feedback,
    combined_progression,
    metrics_summary,
    render_arena,
    render_progression,
    render_trajectory,
)
from evonav.optimizer import Checkpoint, Evaluation, ProgressionCurve
from evonav.orchestrator import expert_curriculum
from evonav.policy import Controller, parse_expr
from evonav.simulation import DEFAULT_PARAMS, run_episode


@dataclass(frozen=True)
class StageStub:
    best_eval: Evaluation
    best_expr: object
    bag: tuple
    curve: ProgressionCurve


def make_stage(per_case, curve=None, bag=()):
    ev = Evaluation(sum(per_case) / len(per_case), tuple(per_case), (0.0, 0.0))
    if curve is None:
        curve = ProgressionCurve(
            (
                Checkpoint(100, 0.4, tuple(0.4 for _ in per_case)),
                Checkpoint(200, ev.fitness, tuple(per_case)),
            )
        )
    return StageStub(ev, parse_expr("0.0"), tuple(bag), curve)


def test_metrics_summary_lines_and_digits():
    stage = make_stage((0.012345, 0.2, 0.016654321))
    text = metrics_summary(stage)
    lines = text.split("\n")
    assert len(lines) == 3
    assert lines[0] == "quality of the best policy on the newest case: 0.01665"
    assert lines[1] == (
        "quality of the best policy on each case: 0.01235, 0.2, 0.01665"
    )
    # mean of the three values, four significant digits
    assert lines[2] == "mean quality of the best policy across cases: 0.07633"


def test_combined_progression_accumulates_offsets():
    c1 = ProgressionCurve((Checkpoint(100, 0.4, (0.4,)), Checkpoint(200, 0.3, (0.3,))))
    c2 = ProgressionCurve(
        (Checkpoint(100, 0.35, (0.3, 0.4)), Checkpoint(300, 0.2, (0.2, 0.2)))
    )
    merged = combined_progression([c1, c2])
    evals = [c.evaluations for c in merged.checkpoints]
    assert evals == [100, 200, 300, 500]
    assert merged.checkpoints[2].per_case == (0.3, 0.4)


def test_progression_chart_series_and_legend():
    curve = ProgressionCurve(
        (
            Checkpoint(100, 0.4, (0.4,)),
            Checkpoint(200, 0.3, (0.3, 0.5)),
            Checkpoint(300, 0.2, (0.2, 0.3)),
        )
    )
    art = render_progression(curve, ["case 1", "case 2"])
    doc = xml.dom.minidom.parseString(art.svg)
    polys = [
        p
        for p in doc.getElementsByTagName("polyline")
        if p.getAttribute("class") == "series"
    ]
    assert len(polys) == 2
    # case 2's series only covers checkpoints that include it
    assert polys[0].getAttribute("points").count(",") == 3
    assert polys[1].getAttribute("points").count(",") == 2
    legends = [
        g
        for g in doc.getElementsByTagName("g")
        if g.getAttribute("class") == "legend-entry"
    ]
    assert len(legends) == 2
    assert art.png[:8] == b"\x89PNG\r\n\x1a\n"
    assert "lower is better" in art.caption


def test_progression_chart_axis_geometry():
    # y = 0 sits on the x axis line (chart bottom) regardless of data
    curve = ProgressionCurve((Checkpoint(100, 0.5, (0.5,)),))
    art = render_progression(curve, ["case 1"])
    assert '<line x1="56.00" y1="355.00" x2="60.00" y2="355.00"' in art.svg
    # the y axis spans chart top to chart bottom at x = 60
    assert '<line x1="60.00" y1="30.00" x2="60.00" y2="355.00"' in art.svg


def test_arena_image_matches_layout():
    case = expert_curriculum()[3]
    art = render_arena(case)
    doc = xml.dom.minidom.parseString(art.svg)
    walls = [
        r
        for r in doc.getElementsByTagName("rect")
        if r.getAttribute("class") == "wall"
    ]
    assert len(walls) == len(case.wall_tiles())
    classes = {
        c.getAttribute("class") for c in doc.getElementsByTagName("circle")
    }
    assert classes == {"start", "target"}
    boundary = [
        r
        for r in doc.getElementsByTagName("rect")
        if r.getAttribute("class") == "boundary"
    ]
    assert len(boundary) == 1


def test_trajectory_image_has_full_path():
    case = expert_curriculum()[0]
    controller = Controller(parse_expr("0.0"), v_max=DEFAULT_PARAMS.v_max)
    log = run_episode(case, controller, DEFAULT_PARAMS)
    art = render_trajectory(case, log)
    doc = xml.dom.minidom.parseString(art.svg)
    paths = [
        p
        for p in doc.getElementsByTagName("polyline")
        if p.getAttribute("class") == "path"
    ]
    assert len(paths) == 1
    n_points = len(paths[0].getAttribute("points").split(" "))
    assert n_points == DEFAULT_PARAMS.n_steps + 1


def test_build_feedback_image_counts():
    bag = expert_curriculum()[:2]
    stage = make_stage((0.3, 0.25), bag=bag)
    n = build_feedback("N", stage)
    assert n.images() == ()
    assert n.progression_image is None

    np_ = build_feedback("NP", stage)
    assert np_.progression_image is not None
    assert np_.trajectory_images == ()
    assert len(np_.images()) == 1

    npb = build_feedback("NPB", stage)
    assert len(npb.trajectory_images) == 2
    assert len(npb.images()) == 3
    assert npb.images()[0] is npb.progression_image
    assert [a.name for a in npb.trajectory_images] == [
        "feedback-trajectory-1",
        "feedback-trajectory-2",
    ]


def test_build_feedback_rejects_unknown_modality():
    stage = make_stage((0.3,), bag=expert_curriculum()[:1])
    with pytest.raises(ValueError, match="modality"):
        build_feedback("NPX", stage)


def test_feedback_prior_stage_curves_are_merged():
    bag = expert_curriculum()[:1]
    prior = make_stage((0.4,), bag=bag)
    stage = make_stage((0.3,), bag=bag)
    solo = build_feedback("NP", stage)
    merged = build_feedback("NP", stage, prior_stages=[prior])
    # the merged chart covers twice the evaluation span, so its x axis
    # labels differ from the single-stage chart
    assert solo.progression_image.svg != merged.progression_image.svg


def test_images_are_byte_stable():
    case = expert_curriculum()[1]
    controller = Controller(parse_expr("(max v3 -0.25)"), v_max=DEFAULT_PARAMS.v_max)
    log = run_episode(case, controller, DEFAULT_PARAMS)
    a = render_trajectory(case, log)
    b = render_trajectory(case, log)
    assert a.svg == b.svg
    assert a.png == b.png
