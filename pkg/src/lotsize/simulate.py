"""Seeded Monte Carlo evaluation of inventory policies.

Runs are split into fixed-size chunks. Chunk ``i`` draws its demands from
its own Philox stream spawned from the seed, so a report depends only on
(instance, policy, runs, seed). Two policies simulated with the same seed see
exactly the same demand matrix (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sdp import Instance, PolicyParams

CHUNK = 65_536
Z99 = 2.576


@dataclass(frozen=True)
class SimulationReport:
    runs: int
    mean: float
    stderr: float
    seed: int
    costs: np.ndarray | None = None

    @property
    def ci_halfwidth(self):
        """Half-width of the 99% confidence interval."""
        return Z99 * self.stderr

    @property
    def ci(self):
        return self.mean - self.ci_halfwidth, self.mean + self.ci_halfwidth

    def record(self, instance_id="", variant=""):
        """Flat row for CSV output."""
        return {
            "instance": instance_id,
            "variant": variant,
            "mean": repr(self.mean),
            "stderr": repr(self.stderr),
            "ci_halfwidth": repr(self.ci_halfwidth),
            "seed": self.seed,
            "runs": self.runs,
        }


def _streams(seed, n_chunks):
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def sample_demands(inst: Instance, rng: np.random.Generator, n: int) -> np.ndarray:
    """Demand matrix of shape (n, T); integer valued unless demand is normal."""
    model = inst.demand
    T = model.T
    if model.kind == "poisson":
        return rng.poisson(np.asarray(model.means), size=(n, T)).astype(float)
    if model.kind == "normal":
        d = rng.normal(np.asarray(model.means), np.asarray(model.stds), size=(n, T))
        return np.maximum(d, 0.0)
    out = np.empty((n, T))
    for t, pmf in enumerate(model.pmfs):
        out[:, t] = rng.choice(len(pmf), size=n, p=np.asarray(pmf))
    return out


def demand_stream(inst: Instance, runs: int, seed: int) -> np.ndarray:
    """The full (runs, T) demand matrix a simulation with ``seed`` uses."""
    n_chunks = -(-runs // CHUNK)
    parts = []
    for i, rng in enumerate(_streams(seed, n_chunks)):
        parts.append(sample_demands(inst, rng, min(CHUNK, runs - i * CHUNK)))
    return np.concatenate(parts)


def _run_costs(inst: Instance, policy: PolicyParams, demand: np.ndarray, first_order: bool):
    c = inst.costs
    x = np.full(demand.shape[0], float(inst.x0))
    total = np.zeros(demand.shape[0])
    for t in range(inst.T):
        below = x < policy.s[t]
        if policy.variant == "sS":
            q = np.maximum(policy.S[t] - x, 0.0)
            if policy.max_order is not None:
                q = np.minimum(q, policy.max_order)
            q = np.where(below, q, 0.0)
        else:
            q = np.where(below, float(policy.Q[t]), 0.0)
        if t == 0 and not first_order:
            q = np.zeros_like(q)
        total += np.where(q > 0, c.K + c.z * q, 0.0)
        x = x + q - demand[:, t]
        total += c.h * np.maximum(x, 0.0) + c.b * np.maximum(-x, 0.0)
    return total


def simulate_policy(inst: Instance, policy: PolicyParams, runs: int = 500_000, seed: int = 0,
                    keep_costs: bool = False, first_order: bool = True) -> SimulationReport:
    """Estimate the expected total cost of ``policy`` from x0.

    ``first_order=False`` forbids an order in period 1, matching a cost-to-go
    reported for a system that starts without ordering.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if policy.T != inst.T:
        raise ValueError(f"policy covers {policy.T} periods, instance has {inst.T}")
    n_chunks = -(-runs // CHUNK)
    parts = []
    for i, rng in enumerate(_streams(seed, n_chunks)):
        d = sample_demands(inst, rng, min(CHUNK, runs - i * CHUNK))
        parts.append(_run_costs(inst, policy, d, first_order))
    costs = np.concatenate(parts)
    mean = math.fsum(costs) / runs
    if runs > 1:
        var = math.fsum((costs - mean) ** 2) / (runs - 1)
        stderr = math.sqrt(var / runs)
    else:
        stderr = 0.0
    return SimulationReport(runs, mean, stderr, seed, costs if keep_costs else None)


def optimality_gap(etc_benchmark: float, etc_other: float) -> float:
    """Percentage by which ``etc_other`` exceeds the benchmark cost."""
    if not etc_benchmark > 0:
        raise ValueError("benchmark cost must be positive")
    return 100.0 * (etc_other - etc_benchmark) / etc_benchmark
