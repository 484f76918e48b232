"""Experiment orchestration, CSV reports and curve tables."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

from .heuristic import ApproxCostCurve, heuristic_sQ, heuristic_sQt
from .fileio import write_atomic
from .sdp import (
    BudgetExceeded,
    InventoryGrid,
    default_sQ_qmax,
    evaluate_fixed_q,
    q_scan,
    solve_sQ_enum,
    solve_sQt_enum,
    solve_sS,
)
from .simulate import optimality_gap, simulate_policy

METHODS = ("sS-SDP", "sQt-SDP", "sQ-SDP", "sQt-H", "sQ-H")
ALIASES = {"sQt-Heuristic": "sQt-H", "sQ-Heuristic": "sQ-H"}
BENCHMARK = "sS-SDP"
# upper bound on (number of Q values) x (grid states) x T for the sQ scan
SQ_SCAN_BUDGET = 2 * 10**8

RESULT_COLUMNS = ("instance", "pattern", "K", "b", "z", "rho", "method", "status",
                  "etc", "gap", "s", "Q", "S")
TIMING_COLUMNS = ("instance", "method", "seconds")
PIVOTS = ("pattern", "K", "b", "z", "rho")


def canonical_method(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return name


def _fmt_vec(v):
    return "" if v is None else " ".join(str(int(x)) for x in v)


def build_policy(inst, method, partitions=None):
    """Policy produced by ``method``; ``policy.cost`` is set for SDP methods."""
    method = canonical_method(method)
    if method == "sS-SDP":
        return solve_sS(inst)[0]
    if method == "sQt-SDP":
        return solve_sQt_enum(inst)
    if method == "sQ-SDP":
        q_max = inst.q_max if inst.q_max is not None else default_sQ_qmax(inst)
        width = inst.window(q_max=q_max)
        work = (q_max + 1) * (width.x_max - width.x_min + 1) * inst.T
        if work > SQ_SCAN_BUDGET:
            raise BudgetExceeded(f"sQ scan work {work} exceeds budget {SQ_SCAN_BUDGET}")
        return solve_sQ_enum(inst, q_max)
    n = partitions or inst.partitions or 10
    return heuristic_sQt(inst, n) if method == "sQt-H" else heuristic_sQ(inst, n)


def solve_method(inst, method, partitions=None, runs=500_000, seed=0):
    """Run one method; returns ``(policy, etc)``.

    SDP methods report their exact expected cost, heuristics the simulated
    mean cost of the policy they produce.
    """
    policy = build_policy(inst, method, partitions)
    if policy.cost is not None:
        return policy, policy.cost
    return policy, simulate_policy(inst, policy, runs=runs, seed=seed).mean


def run_cell(cell_id, tags, inst, methods, partitions=None, runs=500_000, seed=0):
    """All requested methods on one instance; gaps are against sS-SDP."""
    rows = []
    bench = None
    ordered = sorted(set(methods) | {BENCHMARK}, key=METHODS.index)
    for method in ordered:
        row = {"instance": cell_id, "method": method, **{k: _tag(tags.get(k)) for k in PIVOTS}}
        start = time.perf_counter()
        try:
            policy, etc = solve_method(inst, method, partitions, runs, seed)
        except BudgetExceeded:
            row.update(status="skipped", etc="", gap="", s="", Q="", S="")
        else:
            row.update(status="ok", etc=repr(float(etc)), s=_fmt_vec(policy.s),
                       Q=_fmt_vec(policy.Q), S=_fmt_vec(policy.S))
            if method == BENCHMARK:
                bench = etc
            row["gap"] = repr(optimality_gap(bench, etc)) if bench and bench > 0 else ""
        row["seconds"] = f"{time.perf_counter() - start:.3f}"
        if method in methods:
            rows.append(row)
    return rows


def _tag(v):
    return "" if v is None else (f"{v:g}" if isinstance(v, (int, float)) else str(v))


def _csv_text(rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in columns})
    return buf.getvalue()


def _worker_count():
    try:
        return max(1, int(os.environ.get("LOTSIZE_THREADS", "1")))
    except ValueError:
        return 1


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(cells, methods, out_dir, partitions=None, runs=500_000, seed=0, workers=None):
    """Run ``methods`` on every ``(cell_id, tags, Instance)`` cell.

    Writes ``cells/<id>.csv`` per cell, the merged ``results.csv``, the pivot
    table ``summary.csv`` and wall-clock times in ``timings.csv``. Returns the
    merged rows. Everything except the timings is byte-identical for identical
    inputs and seed.
    """
    methods = tuple(canonical_method(m) for m in methods)
    cells = list(cells)
    os.makedirs(os.path.join(out_dir, "cells"), exist_ok=True)
    workers = workers or _worker_count()
    jobs = [(cid, tags, inst, methods, partitions, runs, seed) for cid, tags, inst in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_args, jobs))
    else:
        results = [_run_cell_args(job) for job in jobs]
    merged = []
    for (cid, _, _), rows in zip(cells, results):
        write_atomic(os.path.join(out_dir, "cells", cid + ".csv"), _csv_text(rows, RESULT_COLUMNS))
        merged.extend(rows)
    write_atomic(os.path.join(out_dir, "results.csv"), _csv_text(merged, RESULT_COLUMNS))
    write_atomic(os.path.join(out_dir, "timings.csv"), _csv_text(merged, TIMING_COLUMNS))
    summary = summarize(merged, methods)
    write_atomic(os.path.join(out_dir, "summary.csv"),
                 _csv_text(summary, ("pivot", "value") + methods + tuple(f"n_{m}" for m in methods)))
    return merged


def average(values):
    values = list(values)
    return math.fsum(values) / len(values) if values else float("nan")


def summarize(rows, methods=METHODS):
    """Average gap per method for every value of every pivot, plus an overall row."""
    out = []
    groups = [("all", "")] + [(p, v) for p in PIVOTS
                              for v in sorted({r[p] for r in rows if r[p] != ""}, key=_sort_key)]
    for pivot, value in groups:
        line = {"pivot": pivot, "value": value}
        for m in methods:
            gaps = [float(r["gap"]) for r in rows
                    if r["method"] == m and r["gap"] != "" and (pivot == "all" or r[pivot] == value)]
            line[m] = repr(average(gaps)) if gaps else ""
            line[f"n_{m}"] = len(gaps)
        out.append(line)
    return out


def _sort_key(v):
    try:
        return (0, float(v), "")
    except ValueError:
        return (1, 0.0, v)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

CURVES = ("G_t", "J_vs_Jhat", "DeltaJ_vs_c", "Q_scan", "J_vs_approx")


def emit_curve(inst, kind, t=1, x_range=None, q=None, partitions=None, q_max=None):
    """Rows ``(columns, rows)`` for one of the figure-analogue curves.

    * ``G_t``: G_t(x) of the (s, S) recursion.
    * ``J_vs_Jhat``: J_t(x) and Jhat_t(x) = K + zQ_t + J_t(x + Q_t) for ``q``.
    * ``DeltaJ_vs_c``: J_t(x) - J_t(x + Q_t) against the threshold K + zQ_t.
    * ``Q_scan``: V_1(x0) of the (s_t, Q) policy for Q = 0..q_max.
    * ``J_vs_approx``: exact J_t(x, q) next to its piecewise approximation.
    """
    if kind not in CURVES:
        raise ValueError(f"unknown curve kind {kind!r}; choose from {', '.join(CURVES)}")
    if not 1 <= t <= inst.T:
        raise ValueError(f"period {t} outside 1..{inst.T}")
    if kind == "Q_scan":
        q_max = q_max if q_max is not None else (inst.q_max if inst.q_max is not None
                                                  else default_sQ_qmax(inst))
        values = q_scan(inst, q_max)
        return ("Q", "V"), [(Q, repr(float(v))) for Q, v in enumerate(values)]
    if x_range is None:
        raise ValueError(f"curve {kind} needs an inventory range")
    xs = range(x_range[0], x_range[1] + 1)
    if kind == "G_t":
        lo_x = min(x_range[0], inst.x0)
        _, tables = solve_sS(inst, window=InventoryGrid(lo_x - 1, max(x_range[1], inst.x0) + 1)
                             if inst.grid is None else None)
        return ("x", "G"), [(x, repr(tables.value("G", t, x))) for x in xs]
    if q is None:
        raise ValueError(f"curve {kind} needs a quantity vector")
    q = tuple(int(v) for v in q)
    if len(q) != inst.T:
        raise ValueError("quantity vector length differs from the horizon")
    c = inst.costs.K + inst.costs.z * q[t - 1]
    if kind == "J_vs_approx":
        n = partitions or inst.partitions or 20
        curve = ApproxCostCurve(inst, t, q, n)
    vt = evaluate_fixed_q(inst, q, _curve_window(inst, x_range, q))
    rows = []
    for x in xs:
        J = vt.at("J", t, x)
        if kind == "J_vs_Jhat":
            rows.append((x, repr(J), repr(vt.at("Jhat", t, x))))
        elif kind == "DeltaJ_vs_c":
            rows.append((x, repr(vt.at("dJ", t, x)), repr(c)))
        else:
            rows.append((x, repr(J), repr(curve(x))))
    columns = {"J_vs_Jhat": ("x", "J", "Jhat"), "DeltaJ_vs_c": ("x", "DeltaJ", "c"),
               "J_vs_approx": ("x", "J", "J_approx")}[kind]
    return columns, rows


def _curve_window(inst, x_range, q):
    if inst.grid is not None:
        return None
    lo = min(x_range[0], inst.x0) - 1
    hi = max(x_range[1], inst.x0 + sum(q)) + 1
    return InventoryGrid(lo, hi)


def curve_csv(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()

