"""Compiled inner loops for episode simulation and policy evaluation.

Every arithmetic expression here mirrors the pure-Python reference in
`simulation` and `policy` token for token (same operand order, same
branch structure), so the two paths produce bit-identical floats. All
math.* calls resolve to the same libm as CPython's math module. Keep
the two in lockstep when editing either.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True, nogil=True)
def eval_program(ops, args, values, stack):
    """Postorder stack interpreter for compiled policy trees."""
    sp = 0
    for i in range(ops.shape[0]):
        op = ops[i]
        if op == 0:  # var
            stack[sp] = values[np.int64(args[i])]
            sp += 1
        elif op == 1:  # const
            stack[sp] = args[i]
            sp += 1
        elif op == 2:  # add
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == 3:  # sub
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == 4:  # mul
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == 5:  # pdiv
            sp -= 1
            b = stack[sp]
            if abs(b) >= 1e-10:
                stack[sp - 1] = stack[sp - 1] / b
            else:
                stack[sp - 1] = 1.0
        elif op == 6:  # plog
            a = stack[sp - 1]
            if abs(a) >= 1e-10:
                stack[sp - 1] = math.log(abs(a))
            else:
                stack[sp - 1] = 0.0
        elif op == 7:  # max
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
            stack[sp - 1] = b if b > a else a
        elif op == 8:  # min
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
            stack[sp - 1] = b if b < a else a
        elif op == 9:  # tanh
            stack[sp - 1] = math.tanh(stack[sp - 1])
        elif op == 10:  # gt
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
            if a > b:
                stack[sp - 1] = 1.0
            elif a < b:
                stack[sp - 1] = -1.0
            else:
                stack[sp - 1] = 0.0
        elif op == 11:  # lt
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
            if b > a:
                stack[sp - 1] = 1.0
            elif b < a:
                stack[sp - 1] = -1.0
            else:
                stack[sp - 1] = 0.0
        else:  # if3
            sp -= 2
            a = stack[sp - 1]
            b = stack[sp]
            c = stack[sp + 1]
            stack[sp - 1] = b if a > 0 else c
    return stack[0]


@njit(cache=True, nogil=True)
def wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@njit(cache=True, nogil=True)
def ray_rect(ox, oy, dx, dy, xmin, ymin, xmax, ymax):
    """Entry distance of a ray into an axis-aligned rect, inf on miss."""
    if dx != 0.0:
        t1 = (xmin - ox) / dx
        t2 = (xmax - ox) / dx
        if t1 < t2:
            txmin = t1
            txmax = t2
        else:
            txmin = t2
            txmax = t1
    else:
        if ox < xmin or ox > xmax:
            return INF
        txmin = -INF
        txmax = INF
    if dy != 0.0:
        t1 = (ymin - oy) / dy
        t2 = (ymax - oy) / dy
        if t1 < t2:
            tymin = t1
            tymax = t2
        else:
            tymin = t2
            tymax = t1
    else:
        if oy < ymin or oy > ymax:
            return INF
        tymin = -INF
        tymax = INF
    tmin = tymin if tymin > txmin else txmin
    tmax = tymax if tymax < txmax else txmax
    if tmax < tmin or tmax < 0.0:
        return INF
    return tmin if tmin > 0.0 else 0.0


@njit(cache=True, nogil=True)
def ray_distance(rects, x, y, dxr, dyr, side, srange):
    """First hit among arena boundary and wall rects, clamped to range."""
    if dxr > 0.0:
        tbx = (side - x) / dxr
    elif dxr < 0.0:
        tbx = (0.0 - x) / dxr
    else:
        tbx = INF
    if dyr > 0.0:
        tby = (side - y) / dyr
    elif dyr < 0.0:
        tby = (0.0 - y) / dyr
    else:
        tby = INF
    d = tbx if tbx < tby else tby
    for r in range(rects.shape[0]):
        t = ray_rect(x, y, dxr, dyr, rects[r, 0], rects[r, 1], rects[r, 2], rects[r, 3])
        if t < d:
            d = t
    if d > srange:
        d = srange
    return d


@njit(cache=True, nogil=True)
def disc_free(rects, x, y, radius, side):
    """True iff a disc at (x, y) stays inside bounds and off every wall."""
    if x < radius or x > side - radius or y < radius or y > side - radius:
        return False
    for r in range(rects.shape[0]):
        xmin = rects[r, 0]
        ymin = rects[r, 1]
        xmax = rects[r, 2]
        ymax = rects[r, 3]
        cx = xmin if x < xmin else (xmax if x > xmax else x)
        cy = ymin if y < ymin else (ymax if y > ymax else y)
        ddx = x - cx
        ddy = y - cy
        if ddx * ddx + ddy * ddy < radius * radius:
            return False
    return True


@njit(cache=True, nogil=True)
def episode(
    rects,
    sx,
    sy,
    tx,
    ty,
    side,
    ops,
    args,
    v_max,
    dt,
    radius,
    axle,
    n_steps,
    srange,
    offsets,
    poses,
    obs,
    zero,
):
    """Run one full episode; fills `poses` (n+1, 3) and `obs` (n, 7).

    Returns (final_distance, mean_distance) where the mean runs over
    the poses after each step (k = 1..n).

    `zero` must be 0.0.  It is threaded through the cos arguments below
    so the compiler cannot prove the cos and sin operands are the same
    value and merge the pair into a single sincos call; sincos rounds
    some results 1 ulp away from the separate libm calls the reference
    engine makes.  An argument is opaque to that proof, a literal is
    not (adding 0.0 in source gets folded once the optimizer shows the
    operand is never -0.0).  Adding `zero` only rewrites -0.0 to +0.0,
    and cos is even, so the result bits are unchanged.
    """
    stack = np.empty(ops.shape[0], dtype=np.float64)
    values = np.empty(21, dtype=np.float64)
    hist = np.empty((5, 7), dtype=np.float64)
    n = np.empty(7, dtype=np.float64)
    x = sx
    y = sy
    h = 0.0
    poses[0, 0] = x
    poses[0, 1] = y
    poses[0, 2] = h
    dist_sum = 0.0
    for k in range(n_steps):
        # sense
        for j in range(offsets.shape[0]):
            ang = h + offsets[j]
            obs[k, j] = ray_distance(
                rects, x, y, math.cos(ang + zero), math.sin(ang), side, srange
            )
        gx = tx - x
        gy = ty - y
        dist = math.sqrt(gx * gx + gy * gy)
        td = dist if dist < srange else srange
        if dist == 0.0:
            ta = 0.0
        else:
            ta = wrap_angle(math.atan2(gy, gx) - h)
        obs[k, 5] = td
        obs[k, 6] = ta
        # normalize + augment
        for i in range(5):
            n[i] = 4.0 * obs[k, i] - 1.0
        n[5] = 4.0 * td - 1.0
        n[6] = ta / math.pi
        if k == 0:
            for j in range(5):
                for i in range(7):
                    hist[j, i] = n[i]
        else:
            for j in range(4):
                for i in range(7):
                    hist[j, i] = hist[j + 1, i]
            for i in range(7):
                hist[4, i] = n[i]
        for i in range(7):
            cur = n[i]
            trend = (cur - hist[0, i]) * 0.5
            s = 0.0
            for j in range(5):
                s += hist[j, i]
            values[3 * i] = cur
            values[3 * i + 1] = trend
            values[3 * i + 2] = s / 5.0
        # control
        out = eval_program(ops, args, values, stack)
        t = math.tanh(out)
        left = v_max * (1.0 + 2.0 * (t if t < 0.0 else 0.0))
        right = v_max * (1.0 - 2.0 * (t if t > 0.0 else 0.0))
        # step
        v = (left + right) * 0.5
        w = (right - left) / axle
        nx = x + v * dt * math.cos(h + zero)
        ny = y + v * dt * math.sin(h)
        if disc_free(rects, nx, ny, radius, side):
            x = nx
            y = ny
        h = wrap_angle(h + w * dt)
        poses[k + 1, 0] = x
        poses[k + 1, 1] = y
        poses[k + 1, 2] = h
        fx = x - tx
        fy = y - ty
        dist_sum += math.sqrt(fx * fx + fy * fy)
    fx = x - tx
    fy = y - ty
    final = math.sqrt(fx * fx + fy * fy)
    return final, dist_sum / n_steps
