"""Exact stochastic dynamic programs over an integer inventory grid.

Three solvers share one backward-induction core:

* :func:`solve_sS` -- the optimal (s_t, S_t) benchmark,
* :func:`evaluate_fixed_q` -- cost-to-go under a fixed vector of order
  quantities with a binary order/no-order decision per period,
* :func:`solve_sQt_enum` / :func:`solve_sQ_enum` -- exhaustive search over
  quantity vectors.

Grids are nested: period t's states cover the period-1 window widened by the
largest demand that can occur in periods 1..t-1 (below) and by the orders that
can be placed (above). Every next-state lookup therefore stays on the grid and
no boundary extrapolation is needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .demand import CostParams, DemandModel, convolve, discrete_immediate_cost

logger = logging.getLogger(__name__)

ENUM_BUDGET = 2_000_000
NEVER = -(10**9)  # reorder point of a period that never orders
REACH_TAIL = 1e-9


class GridError(ValueError):
    """Inventory grid cannot hold the states the recursion needs."""


class BudgetExceeded(RuntimeError):
    """Exhaustive enumeration would exceed the configured budget."""


@dataclass(frozen=True)
class InventoryGrid:
    """Window of period-1 opening inventory levels (inclusive, step 1)."""

    x_min: int
    x_max: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise GridError(f"grid needs x_min < x_max, got [{self.x_min}, {self.x_max}]")

    def states(self):
        return np.arange(self.x_min, self.x_max + 1)


@dataclass(frozen=True)
class Instance:
    demand: DemandModel
    costs: CostParams
    x0: int = 0
    q_max: int | None = None
    partitions: int | None = None
    grid: InventoryGrid | None = None
    name: str = ""

    def __post_init__(self):
        if self.q_max is not None and self.q_max < 0:
            raise ValueError("q_max must be >= 0")
        if self.partitions is not None and self.partitions < 1:
            raise ValueError("partitions must be >= 1")

    @property
    def T(self):
        return self.demand.T

    def total_demand_upper(self, tail=REACH_TAIL):
        return convolve(self.demand, 1, self.T).upper(tail)

    def default_grid(self, q_max=None):
        """Window bracketing x0 and every state reachable with prob. > 1e-9."""
        reach = self.total_demand_upper()
        if q_max is None:
            up = self.x0 + max(reach, 1)
        else:
            up = self.x0 + max(self.T * q_max, 1)
        return InventoryGrid(self.x0 - max(reach, 1), up)

    def window(self, q_max=None):
        if self.grid is None:
            return self.default_grid(q_max)
        reach = self.total_demand_upper()
        need_max = self.x0 + (self.T * q_max if q_max is not None else 0)
        if self.grid.x_min > self.x0 - reach or self.grid.x_max < need_max:
            raise GridError(
                f"grid [{self.grid.x_min}, {self.grid.x_max}] does not reach "
                f"[{self.x0 - reach}, {need_max}]"
            )
        return self.grid


@dataclass(frozen=True)
class PolicyParams:
    """Policy parameters; ``S`` for sS, ``Q`` for sQt/sQ (sQ entries all equal).

    ``cost`` is the expected total cost from x0; ``wait_cost`` the same cost
    when no order may be placed in period 1.
    """

    variant: str
    s: tuple
    S: tuple | None = None
    Q: tuple | None = None
    cost: float | None = None
    wait_cost: float | None = None
    max_order: int | None = None

    def __post_init__(self):
        if self.variant not in ("sS", "sQt", "sQ"):
            raise ValueError(f"unknown policy variant {self.variant!r}")
        if self.variant == "sS":
            if self.S is None or len(self.S) != len(self.s):
                raise ValueError("sS policy needs one S per period")
        else:
            if self.Q is None or len(self.Q) != len(self.s):
                raise ValueError("quantity policy needs one Q per period")
            if self.variant == "sQ" and len(set(self.Q)) > 1:
                raise ValueError("sQ policy needs a constant quantity")

    @property
    def T(self):
        return len(self.s)


@dataclass
class ValueTable:
    """Per-period cost-to-go tables for a fixed quantity vector.

    ``J[t-1]`` is indexed from ``lo[t-1]`` and extends ``q[t-1]`` states past
    ``V``, ``Jhat`` and ``dJ`` so that J(x + Q_t) is available for every x.
    """

    q: tuple
    lo: list
    V: list
    J: list
    Jhat: list
    dJ: list

    def states(self, t):
        return self.lo[t - 1] + np.arange(len(self.V[t - 1]))

    def value(self, t, x):
        return float(self.V[t - 1][x - self.lo[t - 1]])

    def at(self, name, t, x):
        return float(getattr(self, name)[t - 1][x - self.lo[t - 1]])


@dataclass
class SSTables:
    """C_t and G_t tables of the (s, S) recursion; index 0 is ``lo[t-1]``."""

    lo: list
    C: list
    G: list
    order: list = field(default_factory=list)

    def states(self, t):
        return self.lo[t - 1] + np.arange(len(self.C[t - 1]))

    def value(self, name, t, x):
        return float(getattr(self, name)[t - 1][x - self.lo[t - 1]])


def period_pmfs(model: DemandModel):
    return [convolve(model, t, t).pmf_array() for t in range(1, model.T + 1)]


def _expect_next(V_next, pmf):
    """E[V(y - d)] for every y whose lookups stay on V's grid.

    V_next indexes states lo..hi; the result indexes lo + len(pmf) - 1..hi.
    """
    if V_next.ndim == 1:
        if len(pmf) > 64 and len(V_next) > 64:
            return fftconvolve(V_next, pmf, mode="valid")
        return np.convolve(V_next, pmf, mode="valid")
    return _batched_valid(V_next, pmf)


def _batched_valid(V, pmf):
    n = V.shape[1] - len(pmf) + 1
    out = np.zeros((V.shape[0], n))
    for k, p in enumerate(pmf):
        if p:
            # y - k for y in out-range: V[:, (len-1-k) + i]
            start = len(pmf) - 1 - k
            out += p * V[:, start:start + n]
    return out


def _nested_bounds(window, pmfs, ups):
    """Per-period [lo_t, hi_t] for t = 1..T+1."""
    lo = [window.x_min]
    hi = [window.x_max]
    for pmf, up in zip(pmfs, ups):
        lo.append(lo[-1] - (len(pmf) - 1))
        hi.append(hi[-1] + up)
    return lo, hi


# ---------------------------------------------------------------------------
# optimal (s, S)
# ---------------------------------------------------------------------------

def solve_sS(inst: Instance, window: InventoryGrid | None = None, max_order: int | None = None):
    """Optimal non-stationary (s, S) policy by backward induction.

    Returns ``(PolicyParams, SSTables)``. The policy orders up to S_t when the
    opening inventory is below s_t, and its cost is C_1(x0). ``max_order``
    (default ``inst.q_max``) caps the size of a single order; with a cap the
    policy orders up to min(S_t, x + cap).
    """
    T = inst.T
    costs = inst.costs
    cap = inst.q_max if max_order is None else max_order
    pmfs = period_pmfs(inst.demand)
    if window is None:
        window = inst.window()
    top = max(window.x_max, inst.x0, inst.total_demand_upper() + 1)
    lo, _ = _nested_bounds(window, pmfs, [0] * T)
    if not lo[0] <= inst.x0 <= top:
        raise GridError("initial inventory outside the grid")

    C_next = np.zeros(top - lo[T] + 1)
    C_tab, G_tab, order_tab = [None] * T, [None] * T, [None] * T
    s, S = [0] * T, [0] * T
    for t in range(T, 0, -1):
        ys = np.arange(lo[t - 1], top + 1)
        G = discrete_immediate_cost(ys, pmfs[t - 1], costs) + _expect_next(C_next, pmfs[t - 1])
        score = costs.z * ys + G
        if cap is None:
            best_after = np.minimum.accumulate(score[::-1])[::-1]
        else:
            best_after = _window_min_ahead(score, cap)
        order_val = costs.K - costs.z * ys + best_after
        order = order_val < G
        C = np.where(order, order_val, G)

        i_star = int(np.argmin(score))
        if i_star == len(ys) - 1 and len(ys) > 1:
            raise GridError(f"order-up-to level in period {t} hit the grid ceiling {top}")
        S[t - 1] = int(ys[i_star])
        where = np.flatnonzero(order)
        if len(where) == 0:
            s[t - 1] = NEVER
        else:
            s[t - 1] = int(ys[where[-1]]) + 1
            if not order[: where[-1] + 1].all():
                logger.warning("period %d: ordering region is not a lower set", t)
        C_tab[t - 1], G_tab[t - 1], order_tab[t - 1] = C, G, order
        C_next = C

    tables = SSTables(lo[:T], C_tab, G_tab, order_tab)
    policy = PolicyParams(
        "sS", tuple(s), S=tuple(S), cost=tables.value("C", 1, inst.x0),
        wait_cost=tables.value("G", 1, inst.x0), max_order=cap,
    )
    return policy, tables


def _window_min_ahead(score, cap):
    """min(score[i+1 .. i+cap]) for each i (inf where the window is empty)."""
    n = len(score)
    out = np.full(n, np.inf)
    for q in range(1, min(cap, n - 1) + 1):
        np.minimum(out[: n - q], score[q:], out=out[: n - q])
    return out


# ---------------------------------------------------------------------------
# fixed order quantities
# ---------------------------------------------------------------------------

def evaluate_fixed_q(inst: Instance, q, window: InventoryGrid | None = None) -> ValueTable:
    """Backward induction with a binary order decision and fixed quantities."""
    q = tuple(int(v) for v in q)
    T = inst.T
    if len(q) != T:
        raise ValueError(f"quantity vector has {len(q)} entries, horizon is {T}")
    if any(v < 0 for v in q):
        raise ValueError("order quantities must be >= 0")
    if window is None:
        window = inst.window(q_max=max(q))
    costs = inst.costs
    pmfs = period_pmfs(inst.demand)
    lo, hi = _nested_bounds(window, pmfs, q)

    V_next = np.zeros(hi[T] - lo[T] + 1)
    out = {k: [None] * T for k in ("V", "J", "Jhat", "dJ")}
    for t in range(T, 0, -1):
        Q = q[t - 1]
        ys = np.arange(lo[t - 1], hi[t] + 1)
        J = discrete_immediate_cost(ys, pmfs[t - 1], costs) + _expect_next(V_next, pmfs[t - 1])
        n = hi[t - 1] - lo[t - 1] + 1
        Jx = J[:n]
        Jhat = costs.order_cost(Q) + J[Q:Q + n]
        V = np.minimum(Jx, Jhat)
        out["V"][t - 1] = V
        out["J"][t - 1] = J
        out["Jhat"][t - 1] = Jhat
        out["dJ"][t - 1] = Jx - J[Q:Q + n]
        V_next = V
    return ValueTable(q, lo[:T], out["V"], out["J"], out["Jhat"], out["dJ"])


def extract_reorder_points(vt: ValueTable, q, costs: CostParams):
    """s_t = smallest grid state at which ordering is not strictly cheaper.

    Ordering is strictly cheaper when dJ_t(x) > K + z*Q_t; at equality the
    policy does not order. If not even the lowest state orders, s_t is the
    sentinel ``NEVER``; if every state orders, s_t is one past the top.
    """
    s = []
    for t in range(1, len(q) + 1):
        c = costs.K + costs.z * q[t - 1]
        dJ = vt.dJ[t - 1]
        stay = np.flatnonzero(dJ <= c)
        if q[t - 1] == 0 or (len(stay) and stay[0] == 0):
            s.append(NEVER)
        elif len(stay) == 0:
            s.append(int(vt.lo[t - 1] + len(dJ)))
        else:
            s.append(int(vt.lo[t - 1] + stay[0]))
    return tuple(s)


def _fixed_q_policy(inst, q, variant, window=None):
    vt = evaluate_fixed_q(inst, q, window)
    s = extract_reorder_points(vt, q, inst.costs)
    cost = vt.value(1, inst.x0)
    wait = vt.at("J", 1, inst.x0)
    return PolicyParams(variant, s, Q=tuple(q), cost=cost, wait_cost=wait), vt


def enumerate_costs(inst: Instance, q_max: int, budget: int = ENUM_BUDGET):
    """V_1(x0, q) for every q in {0..q_max}^T as an array of shape (q_max+1,)*T."""
    T = inst.T
    n_vec = (q_max + 1) ** T
    if n_vec > budget:
        raise BudgetExceeded(f"{n_vec} quantity vectors exceed the enumeration budget {budget}")
    costs = inst.costs
    pmfs = period_pmfs(inst.demand)
    point = InventoryGrid(inst.x0, inst.x0 + 1)
    lo, hi = _nested_bounds(point, pmfs, [q_max] * T)
    hi[0] = inst.x0
    qs = np.arange(q_max + 1)
    order_cost = np.array([costs.order_cost(v) for v in qs])

    # rows of V are suffixes (Q_{t}, ..., Q_T) in lexicographic order
    V_next = np.zeros((1, hi[T] - lo[T] + 1))
    for t in range(T, 0, -1):
        ys = np.arange(lo[t - 1], hi[t] + 1)
        J = discrete_immediate_cost(ys, pmfs[t - 1], costs)[None, :] + _expect_next(V_next, pmfs[t - 1])
        n = hi[t - 1] - lo[t - 1] + 1
        blocks = [np.minimum(J[:, :n], order_cost[v] + J[:, v:v + n]) for v in qs]
        V_next = np.concatenate(blocks, axis=0)
    return V_next[:, inst.x0 - lo[0]].reshape((q_max + 1,) * T)


def solve_sQt_enum(inst: Instance, q_max: int | None = None, budget: int = ENUM_BUDGET):
    """Optimal (s_t, Q_t) policy by enumerating every quantity vector.

    Ties in cost resolve to the lexicographically smallest vector.
    """
    q_max = inst.q_max if q_max is None else q_max
    if q_max is None:
        raise ValueError("enumeration needs q_max")
    values = enumerate_costs(inst, q_max, budget)
    best = np.unravel_index(int(np.argmin(values)), values.shape)
    q = tuple(int(v) for v in best)
    policy, _ = _fixed_q_policy(inst, q, "sQt", inst.window(q_max=q_max))
    return policy


def q_scan(inst: Instance, q_max: int):
    """V_1(x0, <Q,...,Q>) for Q = 0..q_max."""
    return np.array([
        evaluate_fixed_q(inst, (Q,) * inst.T, InventoryGrid(inst.x0, inst.x0 + 1)).value(1, inst.x0)
        for Q in range(q_max + 1)
    ])


def solve_sQ_enum(inst: Instance, q_max: int | None = None):
    """Optimal (s_t, Q) policy by scanning the constant quantity."""
    q_max = inst.q_max if q_max is None else q_max
    if q_max is None:
        q_max = default_sQ_qmax(inst)
    values = q_scan(inst, q_max)
    Q = int(np.argmin(values))
    policy, _ = _fixed_q_policy(inst, (Q,) * inst.T, "sQ", inst.window(q_max=q_max))
    return policy


def default_sQ_qmax(inst: Instance):
    return max(inst.total_demand_upper(), 1)


def brute_force_value(inst: Instance, q, x):
    """Reference V_1(x, q) by explicit recursion over demand outcomes.

    Exponential in T; meant for tiny instances in tests.
    """
    pmfs = period_pmfs(inst.demand)
    costs = inst.costs

    def L(t, y):
        return float(discrete_immediate_cost(np.array([y]), pmfs[t - 1], costs)[0])

    memo = {}

    def V(t, x):
        if t > inst.T:
            return 0.0
        key = (t, x)
        if key not in memo:
            opts = []
            for act in (0, 1):
                y = x + act * q[t - 1]
                cost = (costs.order_cost(q[t - 1]) if act else 0.0) + L(t, y)
                cost += sum(p * V(t + 1, y - d) for d, p in enumerate(pmfs[t - 1]) if p > 0)
                opts.append(cost)
            memo[key] = min(opts)
        return memo[key]

    return V(1, x)


def evaluate_policy(inst: Instance, policy: PolicyParams, first_order: bool = True):
    """Exact expected total cost of following ``policy`` from x0.

    ``first_order=False`` suppresses any order in period 1.
    """
    T = inst.T
    if policy.T != T:
        raise ValueError("policy horizon does not match the instance")
    costs = inst.costs
    pmfs = period_pmfs(inst.demand)
    ups = _policy_max_orders(inst, policy)
    lo, hi = _nested_bounds(InventoryGrid(inst.x0, inst.x0 + 1), pmfs, ups)
    V_next = np.zeros(hi[T] - lo[T] + 1)
    for t in range(T, 0, -1):
        xs = np.arange(lo[t - 1], hi[t - 1] + 1)
        ys = np.arange(lo[t - 1], hi[t] + 1)
        J = discrete_immediate_cost(ys, pmfs[t - 1], costs) + _expect_next(V_next, pmfs[t - 1])
        qty = order_quantity(policy, t, xs)
        if t == 1 and not first_order:
            qty = np.zeros_like(qty)
        V = J[xs - lo[t - 1] + qty] + np.where(qty > 0, costs.K + costs.z * qty, 0.0)
        V_next = V
    return float(V_next[inst.x0 - lo[0]])


def order_quantity(policy: PolicyParams, t, x):
    """Units ordered in period t at opening inventory ``x`` (vectorized)."""
    x = np.asarray(x)
    below = x < policy.s[t - 1]
    if policy.variant == "sS":
        target = policy.S[t - 1] - x
        if policy.max_order is not None:
            target = np.minimum(target, policy.max_order)
        q = np.where(below, np.maximum(target, 0), 0)
    else:
        q = np.where(below, policy.Q[t - 1], 0)
    return q.astype(np.int64) if np.ndim(q) else int(q)


def _policy_max_orders(inst, policy):
    """Largest order the policy can place in each period on the nested grid."""
    if policy.variant != "sS":
        return list(policy.Q)
    widths = [len(p) - 1 for p in period_pmfs(inst.demand)]
    lowest = inst.x0 - np.concatenate(([0], np.cumsum(widths)))
    ups = []
    for t in range(1, inst.T + 1):
        up = int(policy.S[t - 1] - lowest[t - 1])
        if policy.max_order is not None:
            up = min(up, policy.max_order)
        ups.append(max(up, 0))
    return ups
