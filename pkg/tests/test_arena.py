"""Arena text parsing, validation, and world geometry."""

import collections

import numpy as np
import pytest

from evonav.arena import (
    ARENA_SIDE,
    GRID_SIZE,
    TILE_SIDE,
    Arena,
    BadCharacter,
    BadDimensions,
    RandomArenaParams,
    StartCount,
    TargetCount,
    Unreachable,
    generate_random_arena,
    merged_wall_rects,
    parse_arena,
    render,
    tile_center,
    tile_rect,
    to_world,
)

E_ROW = "e" * GRID_SIZE


def grid_text(cells):
    return "|".join("".join(row) for row in cells)


def make_cells(entries):
    cells = [["e"] * GRID_SIZE for _ in range(GRID_SIZE)]
    for (r, c), ch in entries.items():
        cells[r][c] = ch
    return cells


def bfs_reachable(cells, start, target):
    # independent oracle: plain BFS over the raw character grid
    queue = collections.deque([start])
    seen = {start}
    while queue:
        r, c = queue.popleft()
        if (r, c) == target:
            return True
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < GRID_SIZE and 0 <= cc < GRID_SIZE:
                if (rr, cc) not in seen and cells[rr][cc] != "w":
                    seen.add((rr, cc))
                    queue.append((rr, cc))
    return False


def test_parse_round_trip():
    cells = make_cells({(7, 4): "s", (7, 10): "t", (6, 7): "w", (8, 7): "w"})
    text = grid_text(cells)
    arena = parse_arena(text)
    assert arena.text == text
    assert render(arena) == text
    assert arena.start_tile == (7, 4)
    assert arena.target_tile == (7, 10)
    assert arena.wall_tiles() == [(6, 7), (8, 7)]


def test_parse_normalizes_case_and_whitespace():
    cells = make_cells({(0, 0): "s", (14, 14): "t"})
    text = grid_text(cells)
    spaced = "\n".join(text.upper().split("|")[:5]) + "|" + "|".join(text.split("|")[5:])
    # newline-separated head must fail (rows joined without '|')
    with pytest.raises(BadDimensions):
        parse_arena(spaced)
    padded = "  " + text.upper().replace("|", " | ") + "\n"
    assert parse_arena(padded).text == text


def test_parse_dimension_errors():
    with pytest.raises(BadDimensions):
        parse_arena("e" * GRID_SIZE)
    short = ["e" * GRID_SIZE] * GRID_SIZE
    short[3] = "e" * (GRID_SIZE - 1)
    with pytest.raises(BadDimensions):
        parse_arena("|".join(short))
    with pytest.raises(BadDimensions):
        parse_arena("")


def test_parse_character_and_count_errors():
    cells = make_cells({(0, 0): "s", (1, 1): "t"})
    cells[2][2] = "x"
    with pytest.raises(BadCharacter) as err:
        parse_arena(grid_text(cells))
    assert err.value.position == (2, 2)

    cells = make_cells({(0, 0): "s", (0, 1): "s", (1, 1): "t"})
    with pytest.raises(StartCount):
        parse_arena(grid_text(cells))
    cells = make_cells({(0, 0): "s"})
    with pytest.raises(TargetCount):
        parse_arena(grid_text(cells))
    cells = make_cells({(0, 0): "s", (1, 1): "t", (2, 2): "t"})
    with pytest.raises(TargetCount):
        parse_arena(grid_text(cells))


def test_parse_unreachable():
    entries = {(7, 4): "s", (7, 10): "t"}
    for r in range(GRID_SIZE):
        entries[(r, 7)] = "w"
    with pytest.raises(Unreachable):
        parse_arena(grid_text(make_cells(entries)))


def test_reachability_matches_bfs_oracle():
    rng = np.random.default_rng(42)
    agree = 0
    for _ in range(300):
        cells = [["e"] * GRID_SIZE for _ in range(GRID_SIZE)]
        # dense enough that both outcomes occur
        for r in range(GRID_SIZE):
            for c in range(GRID_SIZE):
                if rng.random() < 0.35:
                    cells[r][c] = "w"
        free = [(r, c) for r in range(GRID_SIZE) for c in range(GRID_SIZE) if cells[r][c] == "e"]
        if len(free) < 2:
            continue
        i, j = rng.choice(len(free), size=2, replace=False)
        sr, sc = free[i]
        tr, tc = free[j]
        cells[sr][sc] = "s"
        cells[tr][tc] = "t"
        expected = bfs_reachable(cells, (sr, sc), (tr, tc))
        try:
            parse_arena(grid_text(cells))
            got = True
        except Unreachable:
            got = False
        assert got == expected
        agree += 1
    assert agree > 250


def test_generate_random_arena_validity_and_determinism():
    params = RandomArenaParams()
    for seed in range(20):
        a = parse_arena(generate_random_arena(np.random.default_rng(seed), params).text)
        assert isinstance(a, Arena)
    one = generate_random_arena(np.random.default_rng(7), params)
    two = generate_random_arena(np.random.default_rng(7), params)
    assert one.text == two.text


def test_tile_geometry():
    assert GRID_SIZE == 15
    assert ARENA_SIDE == 1.0
    assert TILE_SIDE == pytest.approx(1.0 / 15.0)
    # row 0 is the top of the text, which is the high-y side of the world
    x, y = tile_center(0, 0)
    assert x == pytest.approx(TILE_SIDE / 2)
    assert y == pytest.approx(1.0 - TILE_SIDE / 2)
    rect = tile_rect(14, 0)
    assert rect.xmin == pytest.approx(0.0)
    assert rect.ymin == pytest.approx(0.0)


def test_to_world_positions():
    cells = make_cells({(7, 7): "s", (7, 9): "t", (3, 4): "w"})
    world = to_world(parse_arena(grid_text(cells)))
    assert world.side == ARENA_SIDE
    assert world.start_pos == pytest.approx(tile_center(7, 7))
    assert world.target_pos == pytest.approx(tile_center(7, 9))
    assert len(world.wall_rects) == 1
    assert world.wall_rects[0] == tile_rect(3, 4)


def test_merged_wall_rects_cover_same_area():
    rng = np.random.default_rng(3)
    for _ in range(30):
        entries = {(0, 0): "s", (14, 14): "t"}
        for _ in range(rng.integers(0, 25)):
            r = int(rng.integers(1, GRID_SIZE - 1))
            c = int(rng.integers(1, GRID_SIZE - 1))
            entries.setdefault((r, c), "w")
        try:
            arena = parse_arena(grid_text(make_cells(entries)))
        except Unreachable:
            continue
        merged = merged_wall_rects(arena)
        tiles = set(arena.wall_tiles())
        # each tile center of a wall tile lies in exactly one merged rect
        for r, c in tiles:
            x, y = tile_center(r, c)
            hits = [
                m for m in merged if m.xmin <= x <= m.xmax and m.ymin <= y <= m.ymax
            ]
            assert len(hits) == 1
        # merged rects never cover a non-wall tile center
        for r in range(GRID_SIZE):
            for c in range(GRID_SIZE):
                if (r, c) in tiles:
                    continue
                x, y = tile_center(r, c)
                for m in merged:
                    assert not (m.xmin < x < m.xmax and m.ymin < y < m.ymax)
        assert len(merged) <= len(tiles) or not tiles
