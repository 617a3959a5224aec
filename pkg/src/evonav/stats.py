"""Aggregate statistics over finished runs.

Quartiles use the inclusive method (linear interpolation between order
statistics) and the Mann-Whitney test is exact: the full permutation
distribution is enumerated, which is cheap at the 10-vs-10 sample sizes
the experiments use and avoids any large-sample approximation.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .optimizer import evaluate
from .orchestrator import RunRecord, load_run
from .simulation import DEFAULT_PARAMS, SimParams

METRICS = ("train", "test", "archive_min_test")


class SampleTooLarge(ValueError):
    """The samples exceed the exact enumeration regime."""


class StageMismatch(ValueError):
    """Runs of the same method disagree on the number of stages."""


def median_iqr(samples) -> tuple[float, float, float]:
    """Median and quartiles of `samples` as (median, q1, q3).

    Quartiles interpolate linearly between order statistics (the
    inclusive method), so {1,2,3,4} gives (2.5, 1.75, 3.25).
    """
    arr = np.asarray(list(samples), dtype=float)
    if arr.size < 1:
        raise ValueError("median_iqr needs at least one sample")
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    return float(med), float(q1), float(q3)


def _doubled_midranks(values) -> list[int]:
    """Rank `values` with midranks for ties, doubled so they stay
    integral; the doubling keeps every later comparison exact."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    doubled = [0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        # ranks i+1 .. j+1 share the midrank (i+j+2)/2
        for k in range(i, j + 1):
            doubled[order[k]] = i + j + 2
        i = j + 1
    return doubled


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Exact two-sided Mann-Whitney U test, returned as (U, p).

    U counts the pairs where the first sample wins (ties count half).
    The p-value enumerates every way of splitting the pooled values
    into groups of the observed sizes and sums the probability of a U
    at least as far from its mean as the observed one.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise ValueError("both samples need at least one value")
    if n1 + n2 > 30:
        raise SampleTooLarge(
            f"exact enumeration handles at most 30 values, got {n1 + n2}"
        )
    ranks = _doubled_midranks(a + b)
    r1_doubled = sum(ranks[:n1])
    u_doubled = r1_doubled - n1 * (n1 + 1)

    # distribution of the doubled group-1 rank sum over all splits:
    # dp[k][s] = number of size-k subsets of the pooled ranks summing to s
    total_sum = sum(ranks)
    dp = [[0] * (total_sum + 1) for _ in range(n1 + 1)]
    dp[0][0] = 1
    for r in ranks:
        for k in range(n1, 0, -1):
            row_prev = dp[k - 1]
            row = dp[k]
            for s in range(total_sum, r - 1, -1):
                if row_prev[s - r]:
                    row[s] += row_prev[s - r]

    offset = n1 * (n1 + 1)
    center = n1 * n2  # doubled U has mean n1*n2
    observed = abs(u_doubled - center)
    favorable = sum(
        count
        for s, count in enumerate(dp[n1])
        if count and abs((s - offset) - center) >= observed
    )
    p = favorable / math.comb(n1 + n2, n1)
    return u_doubled / 2.0, p


def eval_policies(policies, arenas, params: SimParams = DEFAULT_PARAMS):
    """Score every policy on the full arena bag.

    `policies` is a sequence of (label, expr) pairs.  Returns one
    (label, fitness, per_case) row per policy plus a final "min" row
    holding the columnwise minima; the aggregate minimum is the
    archive-wide test metric.
    """
    policies = list(policies)
    arenas = list(arenas)
    if not policies:
        raise ValueError("eval_policies needs at least one policy")
    if not arenas:
        raise ValueError("eval_policies needs at least one arena")
    rows = []
    for label, expr in policies:
        ev = evaluate(expr, arenas, params)
        rows.append((str(label), ev.fitness, ev.per_case))
    min_fitness = min(row[1] for row in rows)
    min_per_case = tuple(
        min(row[2][j] for row in rows) for j in range(len(arenas))
    )
    rows.append(("min", min_fitness, min_per_case))
    return rows


def _stage_metrics(record: RunRecord, test_arenas, params: SimParams):
    rows = []
    for stage in record.stages:
        test = evaluate(stage.best_expr, test_arenas, params).fitness
        archive_min = min(
            evaluate(expr, test_arenas, params).fitness
            for _, expr, _ in stage.archive.occupants()
        )
        rows.append(
            {
                "train": stage.best_eval.fitness,
                "test": test,
                "archive_min_test": archive_min,
            }
        )
    return rows


def stats_report(run_dirs, test_arenas, params: SimParams = DEFAULT_PARAMS) -> str:
    """Comparison tables over finished run directories.

    Emits per-method per-stage median and quartiles of the best
    policy's train fitness, its fitness on the held-out arenas, and
    the archive-wide minimum on those arenas, then one pairwise exact
    Mann-Whitney matrix per metric over the final-stage values.  Runs
    of the same method must agree on the stage count; different
    methods may differ (batch runs have a single stage).
    """
    run_dirs = list(run_dirs)
    if not run_dirs:
        raise ValueError("stats_report needs at least one run directory")
    test_arenas = list(test_arenas)

    groups: dict[str, list] = {}
    for d in run_dirs:
        record = load_run(d)
        if not record.stages:
            raise StageMismatch(f"{Path(d)} has no completed stages")
        groups.setdefault(record.config.method, []).append(
            _stage_metrics(record, test_arenas, params)
        )
    for method, runs in groups.items():
        counts = {len(r) for r in runs}
        if len(counts) != 1:
            raise StageMismatch(
                f"method {method!r} mixes runs with {sorted(counts)} stages"
            )

    methods = sorted(groups)
    lines = ["# per-stage metrics, median (q1, q3) across runs"]
    header = ["method", "stage", "n"]
    for metric in METRICS:
        header += [f"{metric}_median", f"{metric}_q1", f"{metric}_q3"]
    lines.append(",".join(header))
    for method in methods:
        runs = groups[method]
        for stage_idx in range(len(runs[0])):
            row = [method, str(stage_idx + 1), str(len(runs))]
            for metric in METRICS:
                med, q1, q3 = median_iqr(r[stage_idx][metric] for r in runs)
                row += [repr(med), repr(q1), repr(q3)]
            lines.append(",".join(row))

    for metric in METRICS:
        lines.append("")
        lines.append(f"# pairwise exact Mann-Whitney p, final-stage {metric}")
        lines.append(",".join(["method"] + methods))
        finals = {m: [r[-1][metric] for r in groups[m]] for m in methods}
        for ma in methods:
            row = [ma]
            for mb in methods:
                _, p = mann_whitney_u(finals[ma], finals[mb])
                row.append(repr(p))
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"
