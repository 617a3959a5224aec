"""Genetic-programming policies: expression trees over 21 inputs.

A policy is a tree of arithmetic/conditional operators over the
augmented observation vector (21 reals in [-1, 1], see
`normalize_and_augment`) and ephemeral constants drawn from [-5, 5].
Its scalar output is squashed through `postprocess` into a pair of
wheel speed commands. Division and logarithm are protected so every
tree is total on its domain.

Trees print as prefix s-expressions, e.g.::

    (if3 (gt v3 0.2) (tanh v14) -1.5)

Variables are ``v0`` .. ``v20``; constants round-trip through text with
17 significant digits.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from . import _kernels

N_INPUTS = 21
MAX_DEPTH = 10
INIT_DEPTH_RANGE = (4, 10)
CONST_RANGE = (-5.0, 5.0)
CONST_SIGMA = 0.25
EPS = 1e-10

# operator name -> arity
OP_ARITY = {
    "add": 2,
    "sub": 2,
    "mul": 2,
    "pdiv": 2,
    "plog": 1,
    "max": 2,
    "min": 2,
    "tanh": 1,
    "gt": 2,
    "lt": 2,
    "if3": 3,
}
_OP_NAMES = tuple(sorted(OP_ARITY))

# stack-program opcodes shared with the numba kernels
OPC_VAR = 0
OPC_CONST = 1
_OPC = {
    "add": 2,
    "sub": 3,
    "mul": 4,
    "pdiv": 5,
    "plog": 6,
    "max": 7,
    "min": 8,
    "tanh": 9,
    "gt": 10,
    "lt": 11,
    "if3": 12,
}


@dataclass(frozen=True)
class Func:
    op: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Const:
    value: float


Expr = Union[Func, Var, Const]


def depth(expr: Expr) -> int:
    """Tree depth; a lone leaf has depth 1."""
    if isinstance(expr, Func):
        return 1 + max(depth(a) for a in expr.args)
    return 1


def size(expr: Expr) -> int:
    if isinstance(expr, Func):
        return 1 + sum(size(a) for a in expr.args)
    return 1


def eval_expr(expr: Expr, values) -> float:
    """Reference interpreter. `values` is indexable with 21 floats."""
    if isinstance(expr, Var):
        return float(values[expr.index])
    if isinstance(expr, Const):
        return expr.value
    op = expr.op
    if op == "add":
        return eval_expr(expr.args[0], values) + eval_expr(expr.args[1], values)
    if op == "sub":
        return eval_expr(expr.args[0], values) - eval_expr(expr.args[1], values)
    if op == "mul":
        return eval_expr(expr.args[0], values) * eval_expr(expr.args[1], values)
    if op == "pdiv":
        a = eval_expr(expr.args[0], values)
        b = eval_expr(expr.args[1], values)
        return a / b if abs(b) >= EPS else 1.0
    if op == "plog":
        a = eval_expr(expr.args[0], values)
        return math.log(abs(a)) if abs(a) >= EPS else 0.0
    if op == "max":
        return max(eval_expr(expr.args[0], values), eval_expr(expr.args[1], values))
    if op == "min":
        return min(eval_expr(expr.args[0], values), eval_expr(expr.args[1], values))
    if op == "tanh":
        return math.tanh(eval_expr(expr.args[0], values))
    if op == "gt":
        a = eval_expr(expr.args[0], values)
        b = eval_expr(expr.args[1], values)
        return float((a > b) - (a < b))
    if op == "lt":
        a = eval_expr(expr.args[0], values)
        b = eval_expr(expr.args[1], values)
        return float((b > a) - (b < a))
    if op == "if3":
        a = eval_expr(expr.args[0], values)
        return eval_expr(expr.args[1], values) if a > 0 else eval_expr(expr.args[2], values)
    raise ValueError(f"unknown operator {op!r}")


def eval_expr_batch(expr: Expr, values: np.ndarray) -> np.ndarray:
    """Vectorized evaluation over a (n, 21) input matrix -> (n,) outputs.

    Same semantics as `eval_expr` (conditionals evaluate both branches,
    which is equivalent because all operators are pure and total).
    Values can differ from the scalar interpreter by an ulp where numpy
    and libm round tanh or log differently; use `eval_program` where
    bit-exact agreement with the simulator matters.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]

    def rec(e: Expr) -> np.ndarray:
        if isinstance(e, Var):
            return values[:, e.index].copy()
        if isinstance(e, Const):
            return np.full(n, e.value)
        op = e.op
        if op == "add":
            return rec(e.args[0]) + rec(e.args[1])
        if op == "sub":
            return rec(e.args[0]) - rec(e.args[1])
        if op == "mul":
            return rec(e.args[0]) * rec(e.args[1])
        if op == "pdiv":
            a, b = rec(e.args[0]), rec(e.args[1])
            ok = np.abs(b) >= EPS
            return np.where(ok, a / np.where(ok, b, 1.0), 1.0)
        if op == "plog":
            a = rec(e.args[0])
            ok = np.abs(a) >= EPS
            return np.where(ok, np.log(np.abs(np.where(ok, a, 1.0))), 0.0)
        if op == "max":
            return np.maximum(rec(e.args[0]), rec(e.args[1]))
        if op == "min":
            return np.minimum(rec(e.args[0]), rec(e.args[1]))
        if op == "tanh":
            return np.tanh(rec(e.args[0]))
        if op == "gt":
            a, b = rec(e.args[0]), rec(e.args[1])
            return np.where(a > b, 1.0, 0.0) - np.where(a < b, 1.0, 0.0)
        if op == "lt":
            a, b = rec(e.args[0]), rec(e.args[1])
            return np.where(b > a, 1.0, 0.0) - np.where(b < a, 1.0, 0.0)
        if op == "if3":
            a, b, c = rec(e.args[0]), rec(e.args[1]), rec(e.args[2])
            return np.where(a > 0, b, c)
        raise ValueError(f"unknown operator {op!r}")

    return rec(expr)


def compile_program(expr: Expr) -> tuple[np.ndarray, np.ndarray]:
    """Flatten a tree into postorder (opcodes, operands) arrays for the
    stack interpreter in the simulation kernel."""
    ops: list[int] = []
    args: list[float] = []

    def walk(e: Expr) -> None:
        if isinstance(e, Var):
            ops.append(OPC_VAR)
            args.append(float(e.index))
        elif isinstance(e, Const):
            ops.append(OPC_CONST)
            args.append(e.value)
        else:
            for a in e.args:
                walk(a)
            ops.append(_OPC[e.op])
            args.append(0.0)

    walk(expr)
    return np.asarray(ops, dtype=np.int64), np.asarray(args, dtype=np.float64)


def eval_program(ops: np.ndarray, args: np.ndarray, values: np.ndarray) -> float:
    """Evaluate a compiled program; bit-identical to `eval_expr`."""
    stack = np.empty(len(ops), dtype=np.float64)
    return _kernels.eval_program(ops, args, np.asarray(values, dtype=np.float64), stack)


# ---------------------------------------------------------------------------
# random generation and mutation

def _random_leaf(rng: np.random.Generator) -> Expr:
    if rng.random() < 0.5:
        return Var(int(rng.integers(0, N_INPUTS)))
    return Const(float(rng.uniform(*CONST_RANGE)))


def _random_op(rng: np.random.Generator) -> str:
    return _OP_NAMES[int(rng.integers(0, len(_OP_NAMES)))]


def _full(rng: np.random.Generator, level: int, target: int) -> Expr:
    if level == target:
        return _random_leaf(rng)
    op = _random_op(rng)
    return Func(op, tuple(_full(rng, level + 1, target) for _ in range(OP_ARITY[op])))


def _grow(rng: np.random.Generator, level: int, target: int, root: bool = False) -> Expr:
    # Leaves are forced at the depth cap; the root of a grown tree is
    # always a function so the tree has at least depth 2.
    if level == target:
        return _random_leaf(rng)
    if not root and rng.random() < 0.5:
        return _random_leaf(rng)
    op = _random_op(rng)
    return Func(op, tuple(_grow(rng, level + 1, target) for _ in range(OP_ARITY[op])))


def random_tree(rng: np.random.Generator, mode: str, depth_target: int) -> Expr:
    """Ramped tree initialization.

    `mode` is 'full' (complete tree of exactly `depth_target`) or
    'grow' (depth between 4 and `depth_target`). `depth_target` must
    lie in [4, 10].
    """
    lo, hi = INIT_DEPTH_RANGE
    if not lo <= depth_target <= hi:
        raise ValueError(f"depth_target must be in [{lo}, {hi}], got {depth_target}")
    if mode == "full":
        return _full(rng, 1, depth_target)
    if mode == "grow":
        while True:
            tree = _grow(rng, 1, depth_target, root=True)
            if depth(tree) >= lo:
                return tree
    raise ValueError(f"mode must be 'full' or 'grow', got {mode!r}")


def _grow_subtree(rng: np.random.Generator, max_depth: int) -> Expr:
    # Replacement subtrees for mutation: any depth in [1, max_depth].
    target = int(rng.integers(1, max_depth + 1))
    if target == 1:
        return _random_leaf(rng)
    return _grow(rng, 1, target, root=True)


def _nodes_with_depth(expr: Expr) -> list[tuple[tuple[int, ...], int]]:
    # preorder (path, depth) pairs; the path is the child-index route
    out: list[tuple[tuple[int, ...], int]] = []

    def walk(e: Expr, path: tuple[int, ...], level: int) -> None:
        out.append((path, level))
        if isinstance(e, Func):
            for i, a in enumerate(e.args):
                walk(a, path + (i,), level + 1)

    walk(expr, (), 1)
    return out


def _replace(expr: Expr, path: tuple[int, ...], sub: Expr) -> Expr:
    if not path:
        return sub
    assert isinstance(expr, Func)
    i = path[0]
    args = tuple(
        _replace(a, path[1:], sub) if j == i else a for j, a in enumerate(expr.args)
    )
    return Func(expr.op, args)


def _perturb_constants(expr: Expr, rng: np.random.Generator) -> tuple[Expr, int]:
    # preorder traversal; every constant gets its own gaussian draw
    if isinstance(expr, Const):
        return Const(expr.value + float(rng.normal(0.0, CONST_SIGMA))), 1
    if isinstance(expr, Var):
        return expr, 0
    total = 0
    new_args = []
    for a in expr.args:
        na, n = _perturb_constants(a, rng)
        new_args.append(na)
        total += n
    return Func(expr.op, tuple(new_args)), total


def _has_const(expr: Expr) -> bool:
    if isinstance(expr, Const):
        return True
    if isinstance(expr, Func):
        return any(_has_const(a) for a in expr.args)
    return False


def mutate(rng: np.random.Generator, expr: Expr) -> Expr:
    """Return a mutated copy; the input tree is never modified.

    With probability 1/2 a uniformly chosen node (root included) is
    replaced by a freshly grown subtree sized so the whole tree keeps
    depth <= 10; otherwise every constant terminal is perturbed with
    gaussian noise (sigma 0.25, no clamping). Trees without constants
    always take the subtree branch.
    """
    subtree_branch = rng.random() < 0.5
    if not subtree_branch and not _has_const(expr):
        subtree_branch = True
    if subtree_branch:
        nodes = _nodes_with_depth(expr)
        path, level = nodes[int(rng.integers(0, len(nodes)))]
        allowed = MAX_DEPTH - level + 1
        return _replace(expr, path, _grow_subtree(rng, allowed))
    mutated, _ = _perturb_constants(expr, rng)
    return mutated


# ---------------------------------------------------------------------------
# text round trip

def format_expr(expr: Expr) -> str:
    """Prefix s-expression form; inverse of `parse_expr`."""
    if isinstance(expr, Var):
        return f"v{expr.index}"
    if isinstance(expr, Const):
        return f"{expr.value:.17g}"
    inner = " ".join(format_expr(a) for a in expr.args)
    return f"({expr.op} {inner})"


class ExprParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    return tokens


def parse_expr(text: str) -> Expr:
    """Parse a prefix s-expression produced by `format_expr`."""
    tokens = _tokenize(text)
    if not tokens:
        raise ExprParseError("empty expression", 0)
    pos = 0

    def atom(tok: str, at: int) -> Expr:
        if tok.startswith("v") and tok[1:].isdigit():
            idx = int(tok[1:])
            if not 0 <= idx < N_INPUTS:
                raise ExprParseError(f"variable index out of range: {tok}", at)
            return Var(idx)
        try:
            return Const(float(tok))
        except ValueError:
            raise ExprParseError(f"bad constant or variable {tok!r}", at) from None

    def parse() -> Expr:
        nonlocal pos
        tok, at = tokens[pos]
        if tok == ")":
            raise ExprParseError("unexpected ')'", at)
        if tok != "(":
            pos += 1
            return atom(tok, at)
        pos += 1
        if pos >= len(tokens):
            raise ExprParseError("unbalanced parentheses", at)
        op, op_at = tokens[pos]
        if op not in OP_ARITY:
            raise ExprParseError(f"unknown operator {op!r}", op_at)
        pos += 1
        args = []
        for _ in range(OP_ARITY[op]):
            if pos >= len(tokens) or tokens[pos][0] == ")":
                where = tokens[pos][1] if pos < len(tokens) else len(text)
                raise ExprParseError(
                    f"operator {op!r} expects {OP_ARITY[op]} arguments", where
                )
            args.append(parse())
        if pos >= len(tokens):
            raise ExprParseError("unbalanced parentheses", len(text))
        close, close_at = tokens[pos]
        if close != ")":
            raise ExprParseError(
                f"operator {op!r} expects {OP_ARITY[op]} arguments", close_at
            )
        pos += 1
        return Func(op, tuple(args))

    expr = parse()
    if pos != len(tokens):
        raise ExprParseError("trailing input after expression", tokens[pos][1])
    return expr


# ---------------------------------------------------------------------------
# observation wrapping and the controller

class WheelCommand(NamedTuple):
    left: float
    right: float


def postprocess(raw_output: float, v_max: float) -> WheelCommand:
    """Squash a scalar into wheel speeds.

    0 drives straight at full speed; +/-inf rotates in place (positive
    output turns right, negative turns left); intermediate values blend
    the two.
    """
    t = math.tanh(raw_output)
    left = v_max * (1.0 + 2.0 * min(0.0, t))
    right = v_max * (1.0 - 2.0 * max(0.0, t))
    return WheelCommand(left, right)


def normalize_and_augment(memory: deque, raw) -> list[float]:
    """Normalize a raw observation and append history features.

    Each of the 7 channels (5 proximities, target distance, target
    angle) is mapped into [-1, 1]; distances via 4*x - 1, the angle via
    x/pi. `memory` is a deque(maxlen=5) owned by the caller; on the
    first observation it is padded with 5 copies so trend and mean are
    well-defined from step one. Returns 21 values, channel-major:
    (current, trend, mean-of-5) per channel, where trend is half the
    difference to the oldest buffered value, keeping it in [-1, 1].
    """
    n = [4.0 * p - 1.0 for p in raw.proximity]
    n.append(4.0 * raw.target_distance - 1.0)
    n.append(raw.target_angle / math.pi)
    if not memory:
        for _ in range(5):
            memory.append(n)
    else:
        memory.append(n)
    out = []
    for i in range(7):
        cur = n[i]
        trend = (cur - memory[0][i]) * 0.5
        s = 0.0
        for j in range(5):
            s += memory[j][i]
        out.append(cur)
        out.append(trend)
        out.append(s / 5.0)
    return out


class Controller:
    """Stateful wrapper turning a policy tree into a wheel controller.

    Keeps the 5-step observation memory between calls; `reset` clears
    it. `step` is the reference path; the simulation kernel consumes
    `program` and `v_max` directly and matches it bit for bit.
    """

    def __init__(self, expr: Expr, v_max: float = 0.01):
        self.expr = expr
        self.v_max = v_max
        self.program = compile_program(expr)
        self._memory: deque = deque(maxlen=5)

    def reset(self) -> None:
        self._memory.clear()

    def step(self, raw) -> WheelCommand:
        aug = normalize_and_augment(self._memory, raw)
        ops, args = self.program
        out = eval_program(ops, args, np.asarray(aug, dtype=np.float64))
        return postprocess(out, self.v_max)


def control_step(controller, raw) -> WheelCommand:
    """One control decision from a raw observation."""
    return controller.step(raw)
