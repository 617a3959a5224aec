"""Tile-grid arenas for robot navigation tasks.

An arena is a 15x15 grid of tiles encoded as 15 rows of 15 characters
joined by '|':

    's' start (exactly one)    't' target (exactly one)
    'w' wall                   'e' empty

Row 0 is the top of the map. The canonical text form is lowercase with
no whitespace; its total length is 15*15 + 14 = 239 characters. The
grid maps onto a 1 m x 1 m world: column c spans x in [c/15, (c+1)/15]
and row r spans y in [(14-r)/15, (15-r)/15], so y points up. Start and
target tiles block nothing; they mark positions only.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass

import numpy as np

GRID_SIZE = 15
ARENA_SIDE = 1.0
TILE_SIDE = ARENA_SIDE / GRID_SIZE
TILE_CHARS = frozenset("stwe")
ENCODED_LENGTH = GRID_SIZE * GRID_SIZE + (GRID_SIZE - 1)


class ArenaError(ValueError):
    """Base class for arena validation failures.

    The message of every subclass is written so it can be echoed back
    verbatim to whoever produced the text (including an LLM) as a
    repair instruction.
    """


class BadDimensions(ArenaError):
    pass


class BadCharacter(ArenaError):
    def __init__(self, message: str, position: tuple[int, int]):
        super().__init__(message)
        self.position = position


class StartCount(ArenaError):
    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class TargetCount(ArenaError):
    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class Unreachable(ArenaError):
    pass


class GenerationExhausted(RuntimeError):
    pass


Rect = collections.namedtuple("Rect", ["xmin", "ymin", "xmax", "ymax"])


@dataclass(frozen=True)
class Arena:
    """A validated 15x15 tile grid.

    `rows` holds the canonical lowercase rows; `start_tile` and
    `target_tile` are (row, col) indices. Instances are produced by
    `parse_arena` / `generate_random_arena` and are always valid.
    """

    rows: tuple[str, ...]
    start_tile: tuple[int, int]
    target_tile: tuple[int, int]

    @property
    def text(self) -> str:
        return "|".join(self.rows)

    def tile(self, row: int, col: int) -> str:
        return self.rows[row][col]

    def wall_tiles(self) -> list[tuple[int, int]]:
        return [
            (r, c)
            for r in range(GRID_SIZE)
            for c in range(GRID_SIZE)
            if self.rows[r][c] == "w"
        ]


@dataclass(frozen=True)
class WorldGeometry:
    """Continuous-world view of an arena.

    `wall_rects` has one axis-aligned rect per wall tile, in row-major
    tile order. `start_pos` / `target_pos` are tile centers. `side` is
    the arena edge length in meters.
    """

    side: float
    wall_rects: tuple[Rect, ...]
    start_pos: tuple[float, float]
    target_pos: tuple[float, float]


@dataclass(frozen=True)
class RandomArenaParams:
    """Knobs for `generate_random_arena`.

    Wall segments: `segment_count` uniform inclusive range, each with a
    uniform `segment_length` and uniform horizontal/vertical
    orientation, placed uniformly fully inside the grid. Segments may
    overlap. A whole layout is resampled until start and target
    connect, up to `max_attempts`.
    """

    segment_count: tuple[int, int] = (1, 4)
    segment_length: tuple[int, int] = (2, 8)
    max_attempts: int = 1000


def parse_arena(text: str) -> Arena:
    """Parse and validate arena text, returning a canonical `Arena`.

    Input is lowercased and all whitespace is discarded before
    validation, so padded or indented encodings are accepted. Raises
    `BadDimensions`, `BadCharacter`, `StartCount`, `TargetCount` or
    `Unreachable` with a human-readable message.
    """
    cleaned = "".join(str(text).lower().split())
    rows = cleaned.split("|") if cleaned else []
    if len(rows) != GRID_SIZE:
        raise BadDimensions(
            f"expected {GRID_SIZE} rows separated by '|', got {len(rows)}"
        )
    for r, row in enumerate(rows):
        if len(row) != GRID_SIZE:
            raise BadDimensions(
                f"row {r + 1} has {len(row)} characters, expected {GRID_SIZE}"
            )
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            if ch not in TILE_CHARS:
                raise BadCharacter(
                    f"character '{ch}' at row {r + 1}, column {c + 1} is not "
                    "one of 's', 't', 'w', 'e'",
                    (r, c),
                )
    starts = [(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == "s"]
    targets = [(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == "t"]
    if len(starts) != 1:
        raise StartCount(
            f"expected exactly one 's' tile, got {len(starts)}", len(starts)
        )
    if len(targets) != 1:
        raise TargetCount(
            f"expected exactly one 't' tile, got {len(targets)}", len(targets)
        )
    arena = Arena(rows=tuple(rows), start_tile=starts[0], target_tile=targets[0])
    if not _connected(arena):
        raise Unreachable(
            "the target is not reachable from the start: walls must leave a "
            "path of non-wall tiles (4-neighbour adjacency) between 's' and 't'"
        )
    return arena


def render(arena: Arena) -> str:
    """Canonical text form of an arena (inverse of `parse_arena`)."""
    return arena.text


def _connected(arena: Arena) -> bool:
    # Breadth-first search over non-wall tiles, 4-connected.
    queue = collections.deque([arena.start_tile])
    seen = {arena.start_tile}
    while queue:
        r, c = queue.popleft()
        if (r, c) == arena.target_tile:
            return True
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < GRID_SIZE and 0 <= cc < GRID_SIZE and (rr, cc) not in seen:
                if arena.rows[rr][cc] != "w":
                    seen.add((rr, cc))
                    queue.append((rr, cc))
    return False


def tile_center(row: int, col: int) -> tuple[float, float]:
    """World coordinates of a tile center (row 0 is the top, y is up)."""
    x = (col + 0.5) * TILE_SIDE
    y = (GRID_SIZE - 1 - row + 0.5) * TILE_SIDE
    return (x, y)


def tile_rect(row: int, col: int) -> Rect:
    """World-space rect covered by a tile."""
    return Rect(
        xmin=col * TILE_SIDE,
        ymin=(GRID_SIZE - 1 - row) * TILE_SIDE,
        xmax=(col + 1) * TILE_SIDE,
        ymax=(GRID_SIZE - row) * TILE_SIDE,
    )


def to_world(arena: Arena) -> WorldGeometry:
    """Continuous geometry of an arena: one rect per wall tile plus the
    start/target tile centers."""
    rects = tuple(tile_rect(r, c) for r, c in arena.wall_tiles())
    return WorldGeometry(
        side=ARENA_SIDE,
        wall_rects=rects,
        start_pos=tile_center(*arena.start_tile),
        target_pos=tile_center(*arena.target_tile),
    )


def merged_wall_rects(arena: Arena) -> tuple[Rect, ...]:
    """Wall rects with horizontal runs of adjacent tiles merged.

    The union of the merged rects is exactly the union of the per-tile
    rects, so ray distances and disc overlap tests are unchanged; the
    simulator uses this smaller set.
    """
    rects = []
    for r in range(GRID_SIZE):
        c = 0
        while c < GRID_SIZE:
            if arena.rows[r][c] != "w":
                c += 1
                continue
            c0 = c
            while c < GRID_SIZE and arena.rows[r][c] == "w":
                c += 1
            first = tile_rect(r, c0)
            last = tile_rect(r, c - 1)
            rects.append(Rect(first.xmin, first.ymin, last.xmax, first.ymax))
    return tuple(rects)


def generate_random_arena(
    rng: np.random.Generator, params: RandomArenaParams = RandomArenaParams()
) -> Arena:
    """Sample a valid random arena; deterministic given the rng state.

    Each attempt draws a fresh layout (wall segments, then start and
    target uniformly on distinct non-wall tiles) and the whole layout
    is resampled until the target is reachable. Raises
    `GenerationExhausted` after `params.max_attempts` attempts.
    """
    lo_n, hi_n = params.segment_count
    lo_len, hi_len = params.segment_length
    for _ in range(params.max_attempts):
        grid = [["e"] * GRID_SIZE for _ in range(GRID_SIZE)]
        n_segments = int(rng.integers(lo_n, hi_n + 1))
        for _ in range(n_segments):
            length = int(rng.integers(lo_len, hi_len + 1))
            length = min(length, GRID_SIZE)
            horizontal = bool(rng.integers(0, 2))
            if horizontal:
                r = int(rng.integers(0, GRID_SIZE))
                c0 = int(rng.integers(0, GRID_SIZE - length + 1))
                for c in range(c0, c0 + length):
                    grid[r][c] = "w"
            else:
                c = int(rng.integers(0, GRID_SIZE))
                r0 = int(rng.integers(0, GRID_SIZE - length + 1))
                for r in range(r0, r0 + length):
                    grid[r][c] = "w"
        free = [
            (r, c)
            for r in range(GRID_SIZE)
            for c in range(GRID_SIZE)
            if grid[r][c] == "e"
        ]
        if len(free) < 2:
            continue
        si = int(rng.integers(0, len(free)))
        ti = int(rng.integers(0, len(free) - 1))
        if ti >= si:
            ti += 1
        sr, sc = free[si]
        tr, tc = free[ti]
        grid[sr][sc] = "s"
        grid[tr][tc] = "t"
        arena = Arena(
            rows=tuple("".join(row) for row in grid),
            start_tile=(sr, sc),
            target_tile=(tr, tc),
        )
        if _connected(arena):
            return arena
    raise GenerationExhausted(
        f"no connected arena found in {params.max_attempts} attempts"
    )


def save_arena(arena: Arena, path) -> None:
    with open(path, "w") as fh:
        fh.write(arena.text + "\n")


def load_arena(path) -> Arena:
    with open(path) as fh:
        return parse_arena(fh.read())
