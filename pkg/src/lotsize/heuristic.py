"""Two-step piecewise-linear heuristic for (s_t, Q_t) and (s_t, Q) policies.

Step I fixes order quantities from an approximate (s, S) policy: the
order-up-to level S_t comes from a cycle-based model that forces an order in
period t, and the matching reorder point from comparing "wait" against "order
up to S_t". Step II approximates the no-order cost-to-go J_t(x, q) under the
fixed quantities and locates each reorder point with a panning binary search.

Expected holding and backorder quantities are evaluated with piecewise-linear
lower bounds of the loss functions of the cumulative demand since the last
review. Given an order schedule every quantity is determined, so both models
are solved exactly by dynamic programming over order periods instead of a MIP
solver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .demand import CostParams, DemandModel, build_partition, convolve, piecewise_cost
from .sdp import NEVER, Instance, PolicyParams

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class BinarySearchConfig:
    """Start probe ``x0``, window width ``w`` and the pan limit of the search."""

    x0: int
    w: int
    max_pans: int = 64

    def __post_init__(self):
        if self.w < 2:
            raise ValueError("binary search step w must be >= 2")


def default_search_config(model: DemandModel, t: int) -> BinarySearchConfig:
    mean = model.means[t - 1]
    return BinarySearchConfig(x0=-int(math.ceil(mean)), w=max(8, int(round(2 * mean))))


class _Cycles:
    """Piecewise cycle costs C_{j,e}(y) = sum_{k=j..e} cost of d_{jk} at level y."""

    def __init__(self, model: DemandModel, costs: CostParams, n: int):
        self.model = model
        self.costs = costs
        self.n = n
        self.T = model.T
        means = np.concatenate(([0.0], np.cumsum(model.means)))
        self._cum = means

    def mean(self, j, k):
        """Expected demand over periods j..k (0 when k < j)."""
        if k < j:
            return 0.0
        return float(self._cum[k] - self._cum[j - 1])

    def part(self, j, k):
        return build_partition(convolve(self.model, j, k), self.n)

    def term(self, j, k, y):
        return piecewise_cost(y, self.part(j, k), self.costs)

    def breakpoints(self, j, e):
        pts = [np.asarray(self.part(j, k).cond_means) for k in range(j, e + 1)]
        return np.unique(np.concatenate(pts))


@lru_cache(maxsize=256)
def _cycles(model, costs, n):
    return _Cycles(model, costs, n)


# ---------------------------------------------------------------------------
# Step I: order-up-to levels
# ---------------------------------------------------------------------------

@dataclass
class OrderUpToModel:
    """Cycle shortest path with free order-up-to levels.

    ``F[j]`` is the approximate minimum cost over j..T when an order is forced
    in period j (fixed cost and unit cost of everything ordered from j on);
    ``level[j]`` is the optimizing order-up-to level of that first order.
    """

    F: dict
    level: dict
    next_order: dict


def _solve_order_up_to(inst: Instance, n: int, integer_levels: bool = False) -> OrderUpToModel:
    cyc = _cycles(inst.demand, inst.costs, n)
    costs = inst.costs
    T = inst.T
    F = {T + 1: 0.0}
    level, nxt = {}, {}
    for j in range(T, 0, -1):
        best = (math.inf, None, None)
        for e in range(j, T + 1):
            ys = cyc.breakpoints(j, e)
            if integer_levels:
                ys = np.unique(np.concatenate((np.floor(ys), np.ceil(ys))))
            cost = sum(cyc.term(j, k, ys) for k in range(j, e + 1))
            if e == T:
                cost = cost + costs.z * ys
            else:
                cost = cost + costs.z * cyc.mean(j, e) + F[e + 1]
            i = int(np.argmin(cost))
            if cost[i] < best[0] - 1e-12:
                best = (float(cost[i]), float(ys[i]), e + 1)
        F[j] = costs.K + best[0]
        level[j] = best[1]
        nxt[j] = best[2]
    return OrderUpToModel(F, level, nxt)


def solve_model_I(inst: Instance, t: int, n: int) -> float:
    """Approximate order-up-to level S_t with an order forced in period t."""
    if not 1 <= t <= inst.T:
        raise IndexError(f"period {t} outside 1..{inst.T}")
    return _solve_order_up_to(inst, n).level[t]


def wait_cost_curve(inst: Instance, t: int, n: int, xs, model: OrderUpToModel | None = None):
    """Approximate cost over t..T from level x with no order in t, plus z*x.

    Later orders choose their order-up-to levels freely, as in Model I.
    """
    if model is None:
        model = _solve_order_up_to(inst, n)
    cyc = _cycles(inst.demand, inst.costs, n)
    costs = inst.costs
    T = inst.T
    xs = np.asarray(xs, dtype=float)
    run = np.zeros_like(xs)
    best = np.full_like(xs, np.inf)
    for e in range(t, T + 1):
        run = run + cyc.term(t, e, xs)
        if e == T:
            tail = costs.z * xs
        else:
            tail = costs.z * cyc.mean(t, e) + model.F[e + 1]
        best = np.minimum(best, run + tail)
    return best


def order_up_to_benefit(inst: Instance, t: int, n: int, model: OrderUpToModel | None = None):
    """x -> saving from ordering up to S_t at x, excluding the fixed cost K."""
    if model is None:
        model = _solve_order_up_to(inst, n)
    base = model.F[t] - inst.costs.K

    def benefit(x):
        return float(wait_cost_curve(inst, t, n, [x], model)[0]) - base

    return benefit


def step1_quantities(inst: Instance, n: int, search: dict | None = None):
    """Approximate quantities Q_t = max(S_t - s_t, 0) from an approximate (s, S) policy.

    Returns ``(q, S, s)``.
    """
    model = _solve_order_up_to(inst, n)
    q, S_out, s_out = [], [], []
    for t in range(1, inst.T + 1):
        S_t = model.level[t]
        f = order_up_to_benefit(inst, t, n, model)
        cfg = (search or {}).get(t) or default_search_config(inst.demand, t)
        s_t = binary_search(f, inst.costs.K, cfg)
        q.append(max(int(round(S_t - s_t)), 0))
        S_out.append(S_t)
        s_out.append(s_t)
    return tuple(q), tuple(S_out), tuple(s_out)


# ---------------------------------------------------------------------------
# Step II: fixed-quantity approximation of J_t
# ---------------------------------------------------------------------------

def _fixed_q_tables(inst: Instance, t: int, q, n: int, u_lo: int, u_hi: int):
    """W[j](u) for j = t+1..T over integer u in [u_lo, u_hi + sum(q[t:])].

    u is the opening level of period t plus everything ordered in t+1..j-1;
    W[j](u) is the approximate cost of j..T when an order is placed in j.
    """
    cyc = _cycles(inst.demand, inst.costs, n)
    costs = inst.costs
    T = inst.T
    top = u_hi + sum(q[t:])
    us = np.arange(u_lo, top + 1)
    W = {}
    for j in range(T, t, -1):
        Qj = q[j - 1]
        y = us + Qj - cyc.mean(t, j - 1)
        run = np.zeros(len(us))
        best = np.full(len(us), np.inf)
        for e in range(j, T + 1):
            run = run + cyc.term(j, e, y)
            if e == T:
                cand = run
            else:
                nxt = np.full(len(us), np.inf)
                if Qj < len(us):
                    nxt[: len(us) - Qj] = W[e + 1][Qj:]
                cand = run + nxt
            best = np.minimum(best, cand)
        W[j] = costs.K + costs.z * Qj + best
    return us, W


def model_II_curve(inst: Instance, t: int, q, n: int, x_lo: int, x_hi: int):
    """Approximate J_t(x, q) for integer x in [x_lo, x_hi]."""
    q = tuple(int(v) for v in q)
    if len(q) != inst.T:
        raise ValueError("quantity vector must cover the whole horizon")
    if any(v < 0 for v in q):
        raise ValueError("order quantities must be >= 0")
    cyc = _cycles(inst.demand, inst.costs, n)
    us, W = _fixed_q_tables(inst, t, q, n, x_lo, x_hi)
    xs = np.arange(x_lo, x_hi + 1)
    run = np.zeros(len(xs))
    best = np.full(len(xs), np.inf)
    for e in range(t, inst.T + 1):
        run = run + cyc.term(t, e, xs)
        if e == inst.T:
            best = np.minimum(best, run)
        else:
            best = np.minimum(best, run + W[e + 1][: len(xs)])
    return xs, best


def solve_model_II(inst: Instance, t: int, x: int, q, n: int) -> float:
    """Approximate cost over t..T from opening level x with no order in t."""
    return float(model_II_curve(inst, t, q, n, int(x), int(x))[1][0])


@dataclass
class ApproxCostCurve:
    """Lazily widened cache of x -> approximate J_t(x, q)."""

    inst: Instance
    t: int
    q: tuple
    n: int
    lo: int = 0
    hi: int = -1
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __call__(self, x):
        x = int(x)
        if not self.lo <= x <= self.hi:
            self._widen(x)
        return float(self.values[x - self.lo])

    def _widen(self, x):
        if self.hi < self.lo:
            span = max(16, 2 * max(self.q[self.t - 1], 1))
            lo, hi = x - span, x + span
        else:
            span = self.hi - self.lo + 1
            lo, hi = min(self.lo, x - span), max(self.hi, x + span)
        _, self.values = model_II_curve(self.inst, self.t, self.q, self.n, lo, hi)
        self.lo, self.hi = lo, hi

    def delta(self, x):
        """J_t(x) - J_t(x + Q_t)."""
        return self(x) - self(x + self.q[self.t - 1])


# ---------------------------------------------------------------------------
# reorder-point search
# ---------------------------------------------------------------------------

def binary_search(f, c, cfg: BinarySearchConfig):
    """Smallest integer x with f(x) <= c, for f nonincreasing.

    Starts from the window [x0, x0 + w] and pans it by w until it brackets the
    crossing, then halves it. If no bracket turns up within ``max_pans`` pans
    the window span is scanned linearly. The search reaches
    x0 +- max_pans * w only. When f <= c across that whole range its left end
    comes back, and callers treat it as "no crossing"; when f > c throughout,
    the value is one past its right end.
    """
    xl, xr = cfg.x0, cfg.x0 + cfg.w
    fl, fr = f(xl), f(xr)
    pans = 0
    while not (fl > c >= fr):
        if pans == cfg.max_pans:
            return _linear_scan(f, c, cfg)
        if fr > c:
            xl, xr = xr, xr + cfg.w
            fl, fr = fr, f(xr)
        else:
            xl, xr = xl - cfg.w, xl
            fl, fr = f(xl), fl
        pans += 1
    while xr - xl > 1:
        xm = (xl + xr) // 2
        fm = f(xm)
        if fm > fl or fm < fr:
            logger.info("non-monotone difference detected at x=%d", xm)
        if fm > c:
            xl, fl = xm, fm
        else:
            xr, fr = xm, fm
    return xr


def _linear_scan(f, c, cfg):
    span = cfg.max_pans * cfg.w
    logger.info("no bracket within %d pans; scanning [%d, %d]", cfg.max_pans, cfg.x0 - span, cfg.x0 + span)
    for x in range(cfg.x0 - span, cfg.x0 + span + 1):
        if f(x) <= c:
            return x
    return cfg.x0 + span + 1


def binary_search_reorder(inst: Instance, t: int, q, cfg: BinarySearchConfig | None, n: int,
                          curve: ApproxCostCurve | None = None):
    """Approximate reorder point for period t under fixed quantities ``q``."""
    q = tuple(int(v) for v in q)
    if q[t - 1] == 0:
        return NEVER
    if cfg is None:
        cfg = default_search_config(inst.demand, t)
    if curve is None:
        curve = ApproxCostCurve(inst, t, q, n)
    c = inst.costs.K + inst.costs.z * q[t - 1]
    s = binary_search(curve.delta, c, cfg)
    if s <= cfg.x0 - cfg.max_pans * cfg.w:
        # the saving never exceeds the order cost on the scanned range
        return NEVER
    return s


def reorder_points(inst: Instance, q, n: int):
    return tuple(binary_search_reorder(inst, t, q, None, n) for t in range(1, inst.T + 1))


def heuristic_sQt(inst: Instance, n: int | None = None) -> PolicyParams:
    """Heuristic (s_t, Q_t) policy."""
    n = n or inst.partitions or 10
    q, _, _ = step1_quantities(inst, n)
    return PolicyParams("sQt", reorder_points(inst, q, n), Q=q)


def heuristic_sQ(inst: Instance, n: int | None = None) -> PolicyParams:
    """Heuristic (s_t, Q) policy with Q = S_1 from the order-up-to model."""
    n = n or inst.partitions or 10
    Q = max(int(round(solve_model_I(inst, 1, n))), 0)
    q = (Q,) * inst.T
    return PolicyParams("sQ", reorder_points(inst, q, n), Q=q)
