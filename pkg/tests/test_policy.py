"""Policy trees: generation, mutation, evaluation, and the controller
wrapper."""

import math
from collections import deque

import numpy as np
import pytest

from evonav.policy import (
    CONST_RANGE,
    MAX_DEPTH,
    N_INPUTS,
    OP_ARITY,
    Const,
    Controller,
    ExprParseError,
    Func,
    Var,
    WheelCommand,
    compile_program,
    control_step,
    depth,
    eval_expr,
    eval_expr_batch,
    eval_program,
    format_expr,
    mutate,
    normalize_and_augment,
    parse_expr,
    postprocess,
    random_tree,
    size,
)
from evonav.simulation import RawObservation


def rand_inputs(rng, n=1):
    return rng.uniform(-1.0, 1.0, size=(n, N_INPUTS))


def test_postprocess_extremes():
    # tanh saturation injected directly through huge magnitudes
    straight = postprocess(0.0, 0.01)
    assert straight == WheelCommand(0.01, 0.01)
    right = postprocess(1e9, 0.01)
    assert right == WheelCommand(0.01, -0.01)
    left = postprocess(-1e9, 0.01)
    assert left == WheelCommand(-0.01, 0.01)


def test_postprocess_blends_monotonically():
    vals = [postprocess(a, 0.01) for a in np.linspace(-4, 4, 41)]
    lefts = [v.left for v in vals]
    rights = [v.right for v in vals]
    assert all(b >= a for a, b in zip(lefts, lefts[1:]))
    assert all(b <= a for a, b in zip(rights, rights[1:]))
    for v in vals:
        assert -0.01 <= v.left <= 0.01
        assert -0.01 <= v.right <= 0.01


def test_protected_operators():
    x = [0.0] * N_INPUTS
    # division by (almost) zero yields 1, log of (almost) zero yields 0
    assert eval_expr(Func("pdiv", (Const(3.0), Const(0.0))), x) == 1.0
    assert eval_expr(Func("pdiv", (Const(3.0), Const(5e-11))), x) == 1.0
    assert eval_expr(Func("pdiv", (Const(3.0), Const(-2.0))), x) == -1.5
    assert eval_expr(Func("plog", (Const(0.0),)), x) == 0.0
    assert eval_expr(Func("plog", (Const(-5.0),)), x) == math.log(5.0)
    assert eval_expr(Func("plog", (Const(math.e),)), x) == pytest.approx(1.0)


def test_random_tree_depth_bounds():
    rng = np.random.default_rng(0)
    for i in range(200):
        target = 4 + i % 7
        mode = "full" if i % 2 == 0 else "grow"
        tree = random_tree(rng, mode, target)
        d = depth(tree)
        assert d <= target
        if mode == "full":
            assert d == target
        assert size(tree) >= 1


def test_mutate_respects_depth_limit():
    rng = np.random.default_rng(1)
    trees = [random_tree(rng, "grow", 4 + i % 7) for i in range(100)]
    for _ in range(5):
        trees = [mutate(rng, t) for t in trees]
        for t in trees:
            assert depth(t) <= MAX_DEPTH


def test_mutate_changes_something():
    rng = np.random.default_rng(2)
    base = random_tree(rng, "full", 5)
    changed = sum(
        format_expr(mutate(rng, base)) != format_expr(base) for _ in range(50)
    )
    assert changed > 40


def test_format_parse_round_trip():
    rng = np.random.default_rng(3)
    for i in range(200):
        tree = random_tree(rng, "grow" if i % 2 else "full", 4 + i % 7)
        text = format_expr(tree)
        again = parse_expr(text)
        assert format_expr(again) == text
        x = rand_inputs(rng)[0]
        assert eval_expr(again, x) == eval_expr(tree, x)


def test_parse_expr_errors():
    with pytest.raises(ExprParseError):
        parse_expr("(add v0")
    with pytest.raises(ExprParseError):
        parse_expr("(frob v0 v1)")
    with pytest.raises(ExprParseError):
        parse_expr("(add v0 v1) trailing")
    with pytest.raises(ExprParseError):
        parse_expr("v99")


def test_constant_round_trip_17_digits():
    c = Const(0.1 + 0.2)
    text = format_expr(c)
    assert parse_expr(text).value == c.value
    assert CONST_RANGE == (-5.0, 5.0)


def test_eval_program_matches_eval_expr():
    rng = np.random.default_rng(4)
    for i in range(100):
        tree = random_tree(rng, "grow" if i % 2 else "full", 4 + i % 7)
        ops, args = compile_program(tree)
        for x in rand_inputs(rng, 5):
            ref = eval_expr(tree, x)
            fast = eval_program(ops, args, x)
            assert fast == ref or (math.isnan(fast) and math.isnan(ref))


def test_eval_expr_batch_matches_scalar():
    # tanh/log may round an ulp apart between numpy and libm; everything
    # else must agree exactly
    rng = np.random.default_rng(5)
    xs = rand_inputs(rng, 64)
    for i in range(50):
        tree = random_tree(rng, "grow" if i % 2 else "full", 4 + i % 7)
        batch = eval_expr_batch(tree, xs)
        scalar = np.array([eval_expr(tree, xs[k]) for k in range(xs.shape[0])])
        np.testing.assert_allclose(batch, scalar, rtol=1e-13, atol=0.0)
        uses_libm = "tanh" in format_expr(tree) or "plog" in format_expr(tree)
        if not uses_libm:
            assert np.array_equal(batch, scalar)


def test_comparison_and_if3_semantics():
    x = [0.0] * N_INPUTS
    assert eval_expr(parse_expr("(gt 2.0 1.0)"), x) == 1.0
    assert eval_expr(parse_expr("(gt 1.0 2.0)"), x) == -1.0
    assert eval_expr(parse_expr("(gt 1.0 1.0)"), x) == 0.0
    assert eval_expr(parse_expr("(lt 1.0 2.0)"), x) == 1.0
    assert eval_expr(parse_expr("(if3 0.5 3.0 4.0)"), x) == 3.0
    assert eval_expr(parse_expr("(if3 -0.5 3.0 4.0)"), x) == 4.0
    # the condition must be strictly positive to take the first branch
    assert eval_expr(parse_expr("(if3 0.0 3.0 4.0)"), x) == 4.0
    assert eval_expr(parse_expr("(max 1.0 2.0)"), x) == 2.0
    assert eval_expr(parse_expr("(min 1.0 2.0)"), x) == 1.0


def obs(proximity, dist, angle):
    return RawObservation(tuple(proximity), dist, angle)


def test_normalize_and_augment_first_step():
    memory = deque(maxlen=5)
    raw = obs([0.5, 0.25, 0.0, 0.125, 0.5], 0.25, math.pi / 2)
    out = normalize_and_augment(memory, raw)
    assert len(out) == 21
    # channel-major triplets (current, trend, mean); first step pads the
    # memory so trend is 0 and mean equals current
    cur = [4 * 0.5 - 1, 4 * 0.25 - 1, -1.0, 4 * 0.125 - 1, 4 * 0.5 - 1, 0.0, 0.5]
    for i in range(7):
        assert out[3 * i] == pytest.approx(cur[i])
        assert out[3 * i + 1] == 0.0
        assert out[3 * i + 2] == pytest.approx(cur[i])


def test_normalize_and_augment_trend_and_mean():
    memory = deque(maxlen=5)
    for k in range(6):
        raw = obs([0.1 * k] * 5, 0.05 * k, 0.0)
        out = normalize_and_augment(memory, raw)
    # after 6 pushes the oldest of the 5 buffered values is k=1
    cur = 4 * 0.5 - 1.0
    oldest = 4 * 0.1 - 1.0
    assert out[0] == pytest.approx(cur)
    assert out[1] == pytest.approx((cur - oldest) / 2)
    vals = [4 * 0.1 * k - 1.0 for k in range(1, 6)]
    assert out[2] == pytest.approx(sum(vals) / 5)
    for v in out:
        assert -1.0 <= v <= 1.0


def test_controller_determinism_and_reset():
    rng = np.random.default_rng(6)
    tree = random_tree(rng, "grow", 6)
    a = Controller(tree)
    b = Controller(tree)
    stream = [
        obs(rng.uniform(0, 0.5, 5), rng.uniform(0, 0.5), rng.uniform(-math.pi, math.pi))
        for _ in range(20)
    ]
    out_a = [control_step(a, r) for r in stream]
    out_b = [b.step(r) for r in stream]
    assert out_a == out_b
    a.reset()
    assert [a.step(r) for r in stream] == out_a


def test_op_table_shape():
    assert set(OP_ARITY) == {
        "add", "sub", "mul", "pdiv", "plog", "max", "min", "tanh", "gt", "lt", "if3",
    }
    assert OP_ARITY["if3"] == 3
    assert N_INPUTS == 21
    assert MAX_DEPTH == 10
