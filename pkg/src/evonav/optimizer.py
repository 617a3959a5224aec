"""Quality-diversity policy search over a behavior grid.

Policies are scored on a bag of cases by the mean of a per-case cost
(0.9 * final distance to target + 0.1 * mean distance over the
episode; lower is better). Their behavior descriptors are the mean
final x/y gaps between robot and target, binned into a fixed 10 x 10
grid over [-0.5, 0.5]^2. Each cell keeps the best policy seen for it;
a new candidate replaces the occupant when its fitness is less than or
equal (later equal entries win, which keeps search moving on plateaus).

A stage evaluates 100 seed policies and then batches of 100 offspring
(uniform parent draws from the archive, one mutation each) until the
evaluation budget is spent. Everything is deterministic for a fixed
seed regardless of the thread count: each evaluation index derives its
own random stream and insertions apply in index order.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .policy import Controller, Expr, format_expr, mutate, parse_expr, random_tree
from .simulation import (
    DEFAULT_PARAMS,
    PreparedCase,
    SimParams,
    TrajectoryLog,
    prepare_case,
    run_episode,
)

POP_SIZE = 100
N_BINS = 10
DESCRIPTOR_DOMAIN = (-0.5, 0.5)
CHECKPOINT_EVERY = 100
DEFAULT_STAGE_BUDGET = 10000
DEFAULT_BATCH_BUDGET = 40000

FITNESS_FINAL_WEIGHT = 0.9
FITNESS_MEAN_WEIGHT = 0.1


class BudgetTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class Evaluation:
    """Result of scoring one policy on a bag of cases."""

    fitness: float
    per_case: tuple[float, ...]
    descriptors: tuple[float, float]


def fitness_single(log: TrajectoryLog) -> float:
    """Cost of one episode; 0 means the robot parked on the target."""
    return FITNESS_FINAL_WEIGHT * log.final_distance + FITNESS_MEAN_WEIGHT * log.mean_distance


def evaluate(expr: Expr, cases, params: SimParams = DEFAULT_PARAMS) -> Evaluation:
    """Run one episode per case and aggregate fitness and descriptors."""
    prepared = [prepare_case(c) for c in cases]
    return _evaluate_prepared(expr, prepared, params)


def _evaluate_prepared(expr: Expr, prepared: list[PreparedCase], params: SimParams) -> Evaluation:
    if not prepared:
        raise ValueError("the case bag is empty")
    controller = Controller(expr, params.v_max)
    per = []
    gap_x = 0.0
    gap_y = 0.0
    for case in prepared:
        log = run_episode(case, controller, params)
        per.append(fitness_single(log))
        gap_x += float(log.poses[-1, 0]) - case.world.target_pos[0]
        gap_y += float(log.poses[-1, 1]) - case.world.target_pos[1]
    k = len(prepared)
    total = 0.0
    for v in per:
        total += v
    return Evaluation(
        fitness=total / k,
        per_case=tuple(per),
        descriptors=(gap_x / k, gap_y / k),
    )


def bin_index(x: float, lo: float, hi: float, n: int) -> int:
    """Uniform bin of a value over [lo, hi]; out-of-domain values clamp
    to the edge bins and the upper boundary falls into the last bin.

    A value equal to an interior edge lo + (hi - lo) * k / n belongs to
    bin k; the scaled floor alone can land one bin low when xc - lo
    rounds down, so the result is nudged against the exact edges."""
    xc = min(max(float(x), lo), hi)
    i = int(math.floor(n * (xc - lo) / (hi - lo)))
    i = min(max(i, 0), n - 1)
    if i + 1 < n and xc >= lo + (hi - lo) * (i + 1) / n:
        i += 1
    elif i > 0 and xc < lo + (hi - lo) * i / n:
        i -= 1
    return i


class InsertOutcome(enum.Enum):
    INSERTED = "inserted"
    REPLACED = "replaced"
    REJECTED = "rejected"


class EliteArchive:
    """Grid archive keeping the best policy per descriptor cell."""

    def __init__(self, n_bins: int = N_BINS, domain: tuple[float, float] = DESCRIPTOR_DOMAIN):
        self.n_bins = n_bins
        self.domain = domain
        self._cells: dict[tuple[int, int], tuple[Expr, Evaluation]] = {}

    def cell_of(self, descriptors: tuple[float, float]) -> tuple[int, int]:
        lo, hi = self.domain
        return (
            bin_index(descriptors[0], lo, hi, self.n_bins),
            bin_index(descriptors[1], lo, hi, self.n_bins),
        )

    def insert(self, expr: Expr, evaluation: Evaluation) -> InsertOutcome:
        """Elitist insertion: ties replace, worse candidates are dropped."""
        cell = self.cell_of(evaluation.descriptors)
        held = self._cells.get(cell)
        if held is None:
            self._cells[cell] = (expr, evaluation)
            return InsertOutcome.INSERTED
        if evaluation.fitness <= held[1].fitness:
            self._cells[cell] = (expr, evaluation)
            return InsertOutcome.REPLACED
        return InsertOutcome.REJECTED

    def get(self, cell: tuple[int, int]) -> tuple[Expr, Evaluation] | None:
        return self._cells.get(cell)

    def occupants(self) -> list[tuple[tuple[int, int], Expr, Evaluation]]:
        """All occupied cells in row-major cell order."""
        return [(cell, ex, ev) for cell, (ex, ev) in sorted(self._cells.items())]

    def best(self) -> tuple[Expr, Evaluation, tuple[int, int]]:
        """Lowest-fitness occupant; ties break to the lowest cell."""
        if not self._cells:
            raise ValueError("archive is empty")
        cell, (ex, ev) = min(self._cells.items(), key=lambda kv: (kv[1][1].fitness, kv[0]))
        return ex, ev, cell

    def __len__(self) -> int:
        return len(self._cells)


@dataclass(frozen=True)
class Checkpoint:
    evaluations: int
    best_fitness: float
    per_case: tuple[float, ...]


@dataclass(frozen=True)
class ProgressionCurve:
    checkpoints: tuple[Checkpoint, ...]


@dataclass(frozen=True)
class StageResult:
    archive: EliteArchive
    curve: ProgressionCurve
    best_expr: Expr
    best_eval: Evaluation
    evaluations: int


def seed_population(prev_archive: EliteArchive | None, rng: np.random.Generator) -> list[Expr]:
    """Initial population for a stage.

    Without a previous archive: 100 ramped trees (depth targets cycling
    4..10, alternating full/grow). With one: its 25 best occupants,
    one mutant of each, and fresh ramped trees for the remainder; a
    sparse archive contributes what it has and random trees fill up.
    """
    if prev_archive is None or len(prev_archive) == 0:
        return _ramped(rng, POP_SIZE)
    ranked = sorted(prev_archive.occupants(), key=lambda o: (o[2].fitness, o[0]))
    elites = [ex for _, ex, _ in ranked[: POP_SIZE // 4]]
    mutants = [mutate(rng, ex) for ex in elites]
    fresh = _ramped(rng, POP_SIZE - len(elites) - len(mutants))
    return elites + mutants + fresh


def _ramped(rng: np.random.Generator, count: int) -> list[Expr]:
    out = []
    for i in range(count):
        mode = "full" if i % 2 == 0 else "grow"
        out.append(random_tree(rng, mode, 4 + (i % 7)))
    return out


def run_stage(
    seed_exprs: list[Expr],
    cases,
    budget: int,
    seed: int,
    params: SimParams = DEFAULT_PARAMS,
    threads: int = 1,
) -> StageResult:
    """One optimization stage on a fixed bag of cases.

    Seeds are evaluated first (evaluation indices 0..99), then batches
    of 100 offspring until at least `budget` evaluations ran. A
    checkpoint is recorded every 100 evaluations with the archive's
    best fitness and its per-case costs.
    """
    if len(seed_exprs) != POP_SIZE:
        raise ValueError(f"expected {POP_SIZE} seed policies, got {len(seed_exprs)}")
    if budget < len(seed_exprs):
        raise BudgetTooSmall(f"budget {budget} is below the population size {POP_SIZE}")
    prepared = [prepare_case(c) for c in cases]
    if not prepared:
        raise ValueError("the case bag is empty")

    archive = EliteArchive()
    checkpoints: list[Checkpoint] = []

    def eval_batch(exprs: list[Expr]) -> list[Evaluation]:
        if threads <= 1:
            return [_evaluate_prepared(ex, prepared, params) for ex in exprs]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda ex: _evaluate_prepared(ex, prepared, params), exprs))

    def checkpoint(count: int) -> None:
        _, best_ev, _ = archive.best()
        checkpoints.append(Checkpoint(count, best_ev.fitness, best_ev.per_case))

    for expr, ev in zip(seed_exprs, eval_batch(seed_exprs)):
        archive.insert(expr, ev)
    count = len(seed_exprs)
    checkpoint(count)

    while count < budget:
        occupants = archive.occupants()
        offspring = []
        for i in range(POP_SIZE):
            rng = np.random.default_rng([seed, 1, count + i])
            parent = occupants[int(rng.integers(0, len(occupants)))]
            offspring.append(mutate(rng, parent[1]))
        for expr, ev in zip(offspring, eval_batch(offspring)):
            archive.insert(expr, ev)
        count += POP_SIZE
        checkpoint(count)

    best_expr, best_eval, _ = archive.best()
    return StageResult(
        archive=archive,
        curve=ProgressionCurve(tuple(checkpoints)),
        best_expr=best_expr,
        best_eval=best_eval,
        evaluations=count,
    )


# ---------------------------------------------------------------------------
# persistence

def save_archive(archive: EliteArchive, path) -> None:
    with open(path, "w") as fh:
        fh.write("row,col,fitness,d1,d2,policy\n")
        for (r, c), ex, ev in archive.occupants():
            fh.write(
                f"{r},{c},{ev.fitness!r},{ev.descriptors[0]!r},"
                f"{ev.descriptors[1]!r},{format_expr(ex)}\n"
            )


def load_archive(path) -> EliteArchive:
    """Rebuild an archive from its text form.

    Per-case costs are not part of the format; reloaded evaluations
    carry an empty per-case tuple.
    """
    archive = EliteArchive()
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("row,col,"):
            raise ValueError(f"not an archive file: {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            r, c, fitness, d1, d2, policy = line.split(",", 5)
            ev = Evaluation(
                fitness=float(fitness),
                per_case=(),
                descriptors=(float(d1), float(d2)),
            )
            archive._cells[(int(r), int(c))] = (parse_expr(policy), ev)
    return archive


def save_progression(curve: ProgressionCurve, path) -> None:
    n_cases = max((len(cp.per_case) for cp in curve.checkpoints), default=0)
    with open(path, "w") as fh:
        cols = ",".join(f"case_{i + 1}" for i in range(n_cases))
        fh.write(f"evaluations,best_fitness{',' if cols else ''}{cols}\n")
        for cp in curve.checkpoints:
            vals = ",".join(repr(v) for v in cp.per_case)
            fh.write(f"{cp.evaluations},{cp.best_fitness!r}{',' if vals else ''}{vals}\n")


def load_progression(path) -> ProgressionCurve:
    checkpoints = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("evaluations,best_fitness"):
            raise ValueError(f"not a progression file: {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            checkpoints.append(
                Checkpoint(
                    evaluations=int(parts[0]),
                    best_fitness=float(parts[1]),
                    per_case=tuple(float(v) for v in parts[2:]),
                )
            )
    return ProgressionCurve(tuple(checkpoints))
