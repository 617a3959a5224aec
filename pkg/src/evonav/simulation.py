"""Differential-drive robot simulation in walled 1 m x 1 m arenas.

The robot is a disc (radius 0.02 m) driven by two wheel speed commands
at 10 Hz. It senses five proximity rays at fixed heading offsets, the
distance to the target (both saturating at 0.5 m) and the bearing of
the target relative to its heading. A collision cancels the step's
translation but never its rotation, so the robot can always turn away.

Episodes are deterministic: same arena, same controller, same
parameters -> bit-identical trajectories, regardless of how many
episodes run in parallel. Two engines exist: a compiled kernel
(`_kernels.episode`) used everywhere by default, and a pure-Python
reference path that accepts any controller object; they match bit for
bit for policy controllers (mirrored arithmetic, see `_kernels`).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .arena import Arena, Rect, WorldGeometry, merged_wall_rects, to_world

RAY_OFFSETS = (-math.pi / 2, -math.pi / 4, 0.0, math.pi / 4, math.pi / 2)


@dataclass(frozen=True)
class SimParams:
    """Physical constants of the simulation; all lengths in meters,
    times in seconds."""

    v_max: float = 0.01
    dt: float = 0.1
    robot_radius: float = 0.02
    axle_width: float = 0.04
    n_steps: int = 600
    sensor_range: float = 0.5
    ray_offsets: tuple[float, ...] = RAY_OFFSETS


DEFAULT_PARAMS = SimParams()


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float  # radians in [-pi, pi)
    step_index: int


@dataclass(frozen=True)
class RawObservation:
    proximity: tuple[float, ...]  # 5 ray distances in [0, sensor_range]
    target_distance: float  # in [0, sensor_range]
    target_angle: float  # relative bearing in [-pi, pi]


@dataclass(frozen=True)
class TrajectoryLog:
    """Full record of one episode.

    `poses` is (n_steps + 1, 3): x, y, heading, starting with the
    initial pose. `observations` is (n_steps, 7): five proximities,
    target distance, target angle, sensed before each step.
    `mean_distance` averages the target distance of the poses after
    each step (steps 1..n).
    """

    poses: np.ndarray
    observations: np.ndarray
    final_distance: float
    mean_distance: float


@dataclass(frozen=True)
class PreparedCase:
    """A case preprocessed for fast episode evaluation."""

    world: WorldGeometry
    rects: np.ndarray  # (R, 4) xmin, ymin, xmax, ymax


def prepare_case(case) -> PreparedCase:
    """Accepts an `Arena`, a `WorldGeometry` or an already prepared
    case. Arena walls are merged row-wise (identical union, fewer
    rects)."""
    if isinstance(case, PreparedCase):
        return case
    if isinstance(case, Arena):
        world = to_world(case)
        rects = merged_wall_rects(case)
    elif isinstance(case, WorldGeometry):
        world = case
        rects = case.wall_rects
    else:
        raise TypeError(f"cannot simulate a {type(case).__name__}")
    arr = np.asarray([tuple(r) for r in rects], dtype=np.float64).reshape(-1, 4)
    return PreparedCase(world=world, rects=arr)


def wrap_angle(a: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _ray_rect(ox, oy, dx, dy, rect) -> float:
    # mirror of _kernels.ray_rect
    if dx != 0.0:
        t1 = (rect.xmin - ox) / dx
        t2 = (rect.xmax - ox) / dx
        txmin, txmax = (t1, t2) if t1 < t2 else (t2, t1)
    else:
        if ox < rect.xmin or ox > rect.xmax:
            return math.inf
        txmin, txmax = -math.inf, math.inf
    if dy != 0.0:
        t1 = (rect.ymin - oy) / dy
        t2 = (rect.ymax - oy) / dy
        tymin, tymax = (t1, t2) if t1 < t2 else (t2, t1)
    else:
        if oy < rect.ymin or oy > rect.ymax:
            return math.inf
        tymin, tymax = -math.inf, math.inf
    tmin = tymin if tymin > txmin else txmin
    tmax = tymax if tymax < txmax else txmax
    if tmax < tmin or tmax < 0.0:
        return math.inf
    return tmin if tmin > 0.0 else 0.0


def _ray_distance(world: WorldGeometry, x, y, dxr, dyr, srange) -> float:
    # mirror of _kernels.ray_distance
    side = world.side
    if dxr > 0.0:
        tbx = (side - x) / dxr
    elif dxr < 0.0:
        tbx = (0.0 - x) / dxr
    else:
        tbx = math.inf
    if dyr > 0.0:
        tby = (side - y) / dyr
    elif dyr < 0.0:
        tby = (0.0 - y) / dyr
    else:
        tby = math.inf
    d = tbx if tbx < tby else tby
    for rect in world.wall_rects:
        t = _ray_rect(x, y, dxr, dyr, rect)
        if t < d:
            d = t
    if d > srange:
        d = srange
    return d


def sense(world: WorldGeometry, state: RobotState, params: SimParams = DEFAULT_PARAMS) -> RawObservation:
    """Ray-cast the five proximity sensors and locate the target.

    Rays measure the first hit against any wall rect or the arena
    boundary, clamped to the sensor range (an unobstructed ray reads
    the full range). The target bearing is wrapped into [-pi, pi]; a
    target exactly at the robot's position reads angle 0.
    """
    prox = []
    for off in params.ray_offsets:
        ang = state.heading + off
        prox.append(
            _ray_distance(world, state.x, state.y, math.cos(ang), math.sin(ang), params.sensor_range)
        )
    gx = world.target_pos[0] - state.x
    gy = world.target_pos[1] - state.y
    dist = math.sqrt(gx * gx + gy * gy)
    td = dist if dist < params.sensor_range else params.sensor_range
    if dist == 0.0:
        ta = 0.0
    else:
        ta = wrap_angle(math.atan2(gy, gx) - state.heading)
    return RawObservation(proximity=tuple(prox), target_distance=td, target_angle=ta)


def _disc_free(world: WorldGeometry, x, y, radius) -> bool:
    # mirror of _kernels.disc_free
    side = world.side
    if x < radius or x > side - radius or y < radius or y > side - radius:
        return False
    for rect in world.wall_rects:
        cx = rect.xmin if x < rect.xmin else (rect.xmax if x > rect.xmax else x)
        cy = rect.ymin if y < rect.ymin else (rect.ymax if y > rect.ymax else y)
        ddx = x - cx
        ddy = y - cy
        if ddx * ddx + ddy * ddy < radius * radius:
            return False
    return True


def step(world: WorldGeometry, state: RobotState, command, params: SimParams = DEFAULT_PARAMS) -> RobotState:
    """Advance the robot by one control period.

    Translation uses the heading at the start of the step; if the moved
    disc would overlap a wall or leave the arena the position is kept,
    but the heading update always applies.
    """
    left, right = command
    v = (left + right) * 0.5
    w = (right - left) / params.axle_width
    nx = state.x + v * params.dt * math.cos(state.heading)
    ny = state.y + v * params.dt * math.sin(state.heading)
    if _disc_free(world, nx, ny, params.robot_radius):
        x, y = nx, ny
    else:
        x, y = state.x, state.y
    return RobotState(
        x=x,
        y=y,
        heading=wrap_angle(state.heading + w * params.dt),
        step_index=state.step_index + 1,
    )


def run_episode(case, controller, params: SimParams = DEFAULT_PARAMS, engine: str = "auto") -> TrajectoryLog:
    """Run one deterministic episode from the start tile, heading +x.

    `case` may be an `Arena`, a `WorldGeometry` or a `PreparedCase`.
    The fast engine requires a controller exposing `program` and
    `v_max` (see `policy.Controller`); any object with `reset()` and
    `step(raw) -> (left, right)` works on the reference engine.
    """
    prepared = prepare_case(case)
    fast = getattr(controller, "program", None) is not None
    if engine == "auto":
        engine = "fast" if fast else "reference"
    if engine == "fast":
        if not fast:
            raise ValueError("fast engine needs a compiled policy controller")
        return _run_fast(prepared, controller, params)
    if engine == "reference":
        return _run_reference(prepared.world, controller, params)
    raise ValueError(f"unknown engine {engine!r}")


def _run_fast(prepared: PreparedCase, controller, params: SimParams) -> TrajectoryLog:
    ops, args = controller.program
    poses = np.empty((params.n_steps + 1, 3), dtype=np.float64)
    obs = np.empty((params.n_steps, 7), dtype=np.float64)
    final, mean = _kernels.episode(
        prepared.rects,
        float(prepared.world.start_pos[0]),
        float(prepared.world.start_pos[1]),
        float(prepared.world.target_pos[0]),
        float(prepared.world.target_pos[1]),
        float(prepared.world.side),
        ops,
        args,
        float(controller.v_max),
        float(params.dt),
        float(params.robot_radius),
        float(params.axle_width),
        params.n_steps,
        float(params.sensor_range),
        np.asarray(params.ray_offsets, dtype=np.float64),
        poses,
        obs,
        0.0,
    )
    return TrajectoryLog(poses=poses, observations=obs, final_distance=final, mean_distance=mean)


def _run_reference(world: WorldGeometry, controller, params: SimParams) -> TrajectoryLog:
    poses = np.empty((params.n_steps + 1, 3), dtype=np.float64)
    obs = np.empty((params.n_steps, 7), dtype=np.float64)
    state = RobotState(x=world.start_pos[0], y=world.start_pos[1], heading=0.0, step_index=0)
    poses[0] = (state.x, state.y, state.heading)
    controller.reset()
    tx, ty = world.target_pos
    dist_sum = 0.0
    for k in range(params.n_steps):
        raw = sense(world, state, params)
        obs[k, :5] = raw.proximity
        obs[k, 5] = raw.target_distance
        obs[k, 6] = raw.target_angle
        cmd = controller.step(raw)
        state = step(world, state, cmd, params)
        poses[k + 1] = (state.x, state.y, state.heading)
        fx = state.x - tx
        fy = state.y - ty
        dist_sum += math.sqrt(fx * fx + fy * fy)
    fx = state.x - tx
    fy = state.y - ty
    final = math.sqrt(fx * fx + fy * fy)
    return TrajectoryLog(
        poses=poses,
        observations=obs,
        final_distance=final,
        mean_distance=dist_sum / params.n_steps,
    )


def run_episodes(jobs, params: SimParams = DEFAULT_PARAMS, threads: int = 1, engine: str = "auto") -> list[TrajectoryLog]:
    """Run (case, controller) jobs, results in job order.

    With threads > 1 the episodes run on a thread pool; results are
    independent of the thread count. Do not share one stateful
    controller object across jobs in that case.
    """
    if threads <= 1:
        return [run_episode(c, ctl, params, engine) for c, ctl in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: run_episode(job[0], job[1], params, engine), jobs))


def save_trajectory(log: TrajectoryLog, path) -> None:
    """Columnar text dump: step, pose, observation per line."""
    n = log.observations.shape[0]
    with open(path, "w") as fh:
        fh.write(f"# final_distance {log.final_distance!r}\n")
        fh.write(f"# mean_distance {log.mean_distance!r}\n")
        fh.write(
            "# step x y heading prox1 prox2 prox3 prox4 prox5 "
            "target_distance target_angle\n"
        )
        for k in range(n + 1):
            row = [str(k)] + [repr(float(v)) for v in log.poses[k]]
            if k < n:
                row += [repr(float(v)) for v in log.observations[k]]
            else:
                row += ["nan"] * 7
            fh.write(" ".join(row) + "\n")


def load_trajectory(path) -> TrajectoryLog:
    final = mean = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["final_distance"]:
                    final = float(parts[1])
                elif parts[:1] == ["mean_distance"]:
                    mean = float(parts[1])
                continue
            rows.append([float(v) for v in line.split()])
    data = np.asarray(rows, dtype=np.float64)
    if final is None or mean is None or data.shape[1] != 11:
        raise ValueError(f"not a trajectory file: {path}")
    return TrajectoryLog(
        poses=data[:, 1:4].copy(),
        observations=data[:-1, 4:].copy(),
        final_distance=final,
        mean_distance=mean,
    )
