"""Feedback payloads sent to the case designer after each stage.

Three modalities:

* ``N``   - numeric quality summary only
* ``NP``  - numbers plus the cross-stage convergence plot
* ``NPB`` - numbers, plot, and one trajectory image per case

Every image is produced as canonical SVG with a PNG raster alongside;
the PNG exists only for transports that cannot accept vector images.

The ``stage`` argument of :func:`metrics_summary` and
:func:`build_feedback` is duck-typed; it must expose ``best_eval``
(with ``per_case``), ``best_expr``, ``bag`` (arenas in curriculum
order) and ``curve`` (a ProgressionCurve).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import scene
from .arena import Arena, tile_rect, to_world
from .optimizer import Checkpoint, ProgressionCurve
from .policy import Controller
from .simulation import DEFAULT_PARAMS, SimParams, TrajectoryLog, run_episode

MODALITIES = ("N", "NP", "NPB")

SERIES_COLORS = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
)

# chart geometry (pixels)
CHART_WIDTH = 640.0
CHART_HEIGHT = 400.0
CHART_LEFT = 60.0
CHART_RIGHT_PAD = 150.0
CHART_TOP = 30.0
CHART_BOTTOM_PAD = 45.0

# trajectory viewport: fixed scale so 1 m is always the same pixel size
WORLD_SCALE = 300.0
WORLD_MARGIN = 20.0


@dataclass(frozen=True)
class ImageArtifact:
    name: str
    svg: str
    png: bytes
    caption: str


@dataclass(frozen=True)
class FeedbackPayload:
    modality: str
    metrics_text: str
    progression_image: ImageArtifact | None = None
    trajectory_images: tuple[ImageArtifact, ...] = ()

    def images(self) -> tuple[ImageArtifact, ...]:
        head = (self.progression_image,) if self.progression_image else ()
        return head + tuple(self.trajectory_images)


def _fmt(v: float) -> str:
    return format(v, ".4g")


def metrics_summary(stage) -> str:
    """Three labeled lines: newest-case quality, per-case list, mean.

    Values carry 4 significant digits.
    """
    per_case = tuple(stage.best_eval.per_case)
    mean = sum(per_case) / len(per_case)
    return "\n".join(
        [
            "quality of the best policy on the newest case: " + _fmt(per_case[-1]),
            "quality of the best policy on each case: "
            + ", ".join(_fmt(v) for v in per_case),
            "mean quality of the best policy across cases: " + _fmt(mean),
        ]
    )


def combined_progression(curves) -> ProgressionCurve:
    """Concatenate per-stage curves, accumulating evaluation counts.

    A case's series starts at the stage that added it, so later
    checkpoints carry longer per_case tuples.
    """
    checkpoints: list[Checkpoint] = []
    offset = 0
    for curve in curves:
        last = 0
        for ck in curve.checkpoints:
            checkpoints.append(
                Checkpoint(offset + ck.evaluations, ck.best_fitness, ck.per_case)
            )
            last = max(last, ck.evaluations)
        offset += last
    return ProgressionCurve(tuple(checkpoints))


def _nice_step(raw: float) -> float:
    import math

    k = math.floor(math.log10(raw))
    base = raw / 10.0**k
    for cand in (1.0, 2.0, 2.5, 5.0, 10.0):
        if base <= cand:
            return cand * 10.0**k
    return 10.0 * 10.0**k


def _ticks(vmax: float, target: int = 4) -> list[float]:
    if vmax <= 0:
        vmax = 1.0
    step = _nice_step(vmax / target)
    n = int(vmax / step)
    if n * step < vmax - 1e-12 * vmax:
        n += 1
    return [i * step for i in range(n + 1)]


def render_progression(
    curve: ProgressionCurve, case_labels, name: str = "feedback-progression"
) -> ImageArtifact:
    """Line chart: x = fitness evaluations, y = per-case quality of the
    best-so-far policy, one polyline per case, legend on the right.
    The y axis starts at 0."""
    labels = list(case_labels)
    cks = sorted(curve.checkpoints, key=lambda c: c.evaluations)
    xmax = max((c.evaluations for c in cks), default=1)
    ymax_data = max((v for c in cks for v in c.per_case), default=0.0)
    yticks = _ticks(ymax_data if ymax_data > 0 else 1.0)
    ymax = yticks[-1]
    xticks = _ticks(float(xmax))
    xmax = xticks[-1]

    x0, y0 = CHART_LEFT, CHART_TOP
    x1 = CHART_WIDTH - CHART_RIGHT_PAD
    y1 = CHART_HEIGHT - CHART_BOTTOM_PAD

    def tx(v: float) -> float:
        return x0 + (v / xmax) * (x1 - x0)

    def ty(v: float) -> float:
        return y1 - (v / ymax) * (y1 - y0)

    shapes: list[scene.Shape] = []
    # axes
    shapes.append(scene.LineShape(x0, y1, x1, y1, "#333333"))
    shapes.append(scene.LineShape(x0, y0, x0, y1, "#333333"))
    for v in xticks:
        shapes.append(scene.LineShape(tx(v), y1, tx(v), y1 + 4, "#333333"))
        shapes.append(
            scene.TextShape(tx(v), y1 + 16, "%g" % v, size=10, anchor="middle")
        )
    for v in yticks:
        shapes.append(scene.LineShape(x0 - 4, ty(v), x0, ty(v), "#333333"))
        shapes.append(
            scene.TextShape(x0 - 7, ty(v) + 3.5, "%g" % v, size=10, anchor="end")
        )
    shapes.append(
        scene.TextShape((x0 + x1) / 2, CHART_HEIGHT - 12, "fitness evaluations",
                        size=12, anchor="middle")
    )
    shapes.append(
        scene.TextShape(x0, CHART_TOP - 10, "quality (distance to target)",
                        size=12, anchor="start")
    )
    # data series
    for i in range(len(labels)):
        pts = tuple(
            (tx(c.evaluations), ty(c.per_case[i]))
            for c in cks
            if len(c.per_case) > i
        )
        if not pts:
            pts = ((x1, y1),)
        shapes.append(
            scene.PolylineShape(
                pts,
                stroke=SERIES_COLORS[i % len(SERIES_COLORS)],
                stroke_width=1.5,
                css_class="series",
            )
        )
    # legend
    lx = x1 + 18
    for i, label in enumerate(labels):
        ly = y0 + 14 + 18 * i
        swatch = scene.LineShape(
            lx, ly, lx + 18, ly, SERIES_COLORS[i % len(SERIES_COLORS)], 2.0
        )
        text = scene.TextShape(lx + 24, ly + 3.5, str(label), size=11)
        shapes.append(scene.GroupShape((swatch, text), css_class="legend-entry"))

    sc = scene.Scene(CHART_WIDTH, CHART_HEIGHT, shapes=tuple(shapes))
    return ImageArtifact(
        name=name,
        svg=scene.svg_document(sc),
        png=scene.png_bytes(sc),
        caption=(
            "Convergence plot: per-case quality of the best policy so far "
            "(lower is better) against cumulative fitness evaluations; "
            "one line per case, oldest case first in the legend."
        ),
    )


def _world_scene(arena: Arena, extra: tuple[scene.Shape, ...]) -> scene.Scene:
    world = to_world(arena)
    m, s = WORLD_MARGIN, WORLD_SCALE
    side = world.side

    def px(x: float) -> float:
        return m + x * s

    def py(y: float) -> float:
        return m + (side - y) * s

    shapes: list[scene.Shape] = [
        scene.RectShape(m, m, side * s, side * s, fill=None, stroke="#333333",
                        stroke_width=1.5, css_class="boundary")
    ]
    for row, col in arena.wall_tiles():
        r = tile_rect(row, col)
        shapes.append(
            scene.RectShape(
                px(r.xmin), py(r.ymax), (r.xmax - r.xmin) * s, (r.ymax - r.ymin) * s,
                fill="#707070", css_class="wall",
            )
        )
    shapes.extend(extra)
    shapes.append(
        scene.CircleShape(px(world.start_pos[0]), py(world.start_pos[1]), 6,
                          fill="#2ca02c", css_class="start")
    )
    shapes.append(
        scene.CircleShape(px(world.target_pos[0]), py(world.target_pos[1]), 6,
                          fill="#d62728", css_class="target")
    )
    size = 2 * m + side * s
    return scene.Scene(size, size, shapes=tuple(shapes))


def render_trajectory(
    arena: Arena, traj: TrajectoryLog, name: str = "feedback-trajectory"
) -> ImageArtifact:
    """Arena plus the robot's path: boundary square, one rect per wall
    tile, start/target markers, and a polyline through every pose."""
    world = to_world(arena)
    m, s = WORLD_MARGIN, WORLD_SCALE
    pts = tuple(
        (m + float(p[0]) * s, m + (world.side - float(p[1])) * s) for p in traj.poses
    )
    path = scene.PolylineShape(pts, stroke="#1f77b4", stroke_width=1.5,
                               css_class="path")
    sc = _world_scene(arena, (path,))
    return ImageArtifact(
        name=name,
        svg=scene.svg_document(sc),
        png=scene.png_bytes(sc),
        caption=(
            "Trajectory of the best policy on this case: walls in gray, "
            "start marker in green, target marker in red, path in blue."
        ),
    )


def render_arena(arena: Arena, name: str = "arena") -> ImageArtifact:
    sc = _world_scene(arena, ())
    return ImageArtifact(
        name=name,
        svg=scene.svg_document(sc),
        png=scene.png_bytes(sc),
        caption="Arena layout: walls in gray, start in green, target in red.",
    )


def build_feedback(
    modality: str,
    stage,
    prior_stages=(),
    params: SimParams = DEFAULT_PARAMS,
) -> FeedbackPayload:
    """Assemble the stage's payload for the given modality.

    NP adds the convergence plot over all stages so far; NPB further
    adds one trajectory image per case in bag order, produced by
    re-running the stage's best policy.
    """
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}; expected one of {MODALITIES}")
    metrics = metrics_summary(stage)
    if modality == "N":
        return FeedbackPayload(modality, metrics)

    curves = [s.curve for s in prior_stages] + [stage.curve]
    labels = [f"case {i + 1}" for i in range(len(stage.bag))]
    progression = render_progression(combined_progression(curves), labels)
    if modality == "NP":
        return FeedbackPayload(modality, metrics, progression)

    trajectories = []
    for i, case in enumerate(stage.bag):
        controller = Controller(stage.best_expr, v_max=params.v_max)
        log = run_episode(case, controller, params)
        trajectories.append(
            render_trajectory(case, log, name=f"feedback-trajectory-{i + 1}")
        )
    return FeedbackPayload(modality, metrics, progression, tuple(trajectories))
