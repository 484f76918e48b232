"""Demand-pattern generators and the built-in experiment grids.

Every pattern is a shape on [0, 1] that is scaled linearly into ``[lo, hi]``.

* ``LCY1``: logistic growth, launch to maturity, ``1 / (1 + exp(-10 (u - 0.5)))``.
* ``LCY2``: growth, maturity, then decline; product of a rising logistic
  centred at u = 0.25 and a falling one centred at u = 0.75.
* ``SIN1`` / ``SIN2``: ``0.5 + a sin(2 pi t / 6)`` with a = 0.5 and a = 0.2.
* ``STAT``: constant 0.5.
* ``RAND``: uniform draws from a fixed seed (``RAND_SEED``).
* ``EMP1``-``EMP4``: fixed 25-point series in this module, linearly
  interpolated to other horizons. EMP2 and EMP4 contain runs of zeros.

Here ``u = (t - 1) / (T - 1)`` runs from 0 to 1 across the horizon.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .demand import CostParams, DemandModel
from .fileio import save_instance
from .sdp import Instance

PATTERNS = ("LCY1", "LCY2", "SIN1", "SIN2", "STAT", "RAND", "EMP1", "EMP2", "EMP3", "EMP4")
RAND_SEED = 20_190_601

EMP_SERIES = {
    "EMP1": (0.40, 0.55, 0.35, 0.80, 0.95, 0.60, 0.45, 0.70, 1.00, 0.75, 0.50, 0.30, 0.45,
             0.65, 0.85, 0.55, 0.40, 0.60, 0.90, 0.70, 0.35, 0.25, 0.50, 0.65, 0.45),
    "EMP2": (0.60, 0.80, 0.00, 0.00, 0.00, 0.90, 1.00, 0.70, 0.00, 0.00, 0.50, 0.85, 0.65,
             0.00, 0.00, 0.00, 0.75, 0.95, 0.60, 0.00, 0.00, 0.40, 0.80, 0.55, 0.30),
    "EMP3": (0.10, 0.20, 0.15, 0.35, 0.30, 0.50, 0.45, 0.65, 0.60, 0.80, 0.75, 0.95, 1.00,
             0.85, 0.90, 0.70, 0.75, 0.55, 0.60, 0.40, 0.45, 0.25, 0.30, 0.10, 0.15),
    "EMP4": (0.00, 0.00, 0.70, 0.40, 1.00, 0.00, 0.00, 0.00, 0.55, 0.90, 0.30, 0.00, 0.65,
             0.85, 0.00, 0.00, 0.45, 1.00, 0.20, 0.00, 0.75, 0.60, 0.00, 0.00, 0.50),
}

SMALL_COST_SETS = ((5, 3), (10, 3), (10, 7))
LARGE_K = (500, 1000, 1500)
LARGE_B = (5, 10, 20)
LARGE_RHO = (0.1, 0.2, 0.3)
UNIT_COSTS = (0, 1)


def _logistic(u, centre, slope=10.0):
    return 1.0 / (1.0 + np.exp(-slope * (u - centre)))


def _unit(a):
    a = np.asarray(a, dtype=float)
    span = a.max() - a.min()
    return (a - a.min()) / span if span > 0 else np.full_like(a, 0.5)


def pattern_shape(name: str, T: int) -> np.ndarray:
    """Pattern ``name`` over T periods, valued in [0, 1]."""
    if T < 1:
        raise ValueError("T must be >= 1")
    t = np.arange(1, T + 1)
    u = (t - 1) / max(T - 1, 1)
    if name == "LCY1":
        return _unit(_logistic(u, 0.5))
    if name == "LCY2":
        return _unit(_logistic(u, 0.25) * (1.0 - _logistic(u, 0.75)))
    if name in ("SIN1", "SIN2"):
        amp = 0.5 if name == "SIN1" else 0.2
        return 0.5 + amp * np.sin(2 * math.pi * t / 6)
    if name == "STAT":
        return np.full(T, 0.5)
    if name == "RAND":
        return np.random.default_rng(RAND_SEED + T).uniform(0.0, 1.0, T)
    if name in EMP_SERIES:
        base = np.asarray(EMP_SERIES[name])
        if T == len(base):
            return base.copy()
        return np.interp(np.linspace(0, len(base) - 1, T), np.arange(len(base)), base)
    raise ValueError(f"unknown demand pattern {name!r}")


def pattern(name: str, T: int, lo: float, hi: float, digits: int = 2) -> tuple:
    """Pattern scaled into [lo, hi] and rounded to ``digits`` decimals."""
    return tuple(round(float(v), digits) for v in lo + (hi - lo) * pattern_shape(name, T))


@dataclass
class ExperimentGrid:
    """Cross product of demand series and cost parameters.

    ``series`` maps a pattern tag to explicit per-period values; when empty the
    built-in patterns are used.
    """

    kind: str
    T: int
    patterns: tuple = PATTERNS
    cost_sets: tuple = SMALL_COST_SETS
    z: tuple = UNIT_COSTS
    rho: tuple = (None,)
    h: float = 1.0
    lo: float = 1.0
    hi: float = 7.0
    q_max: int | None = None
    partitions: int | None = None
    series: dict = field(default_factory=dict)

    def demand_series(self, tag):
        if tag in self.series:
            return tuple(float(v) for v in self.series[tag])
        return pattern(tag, self.T, self.lo, self.hi)

    def cells(self):
        """Yield ``(cell_id, tags, Instance)`` in a stable order."""
        tags = tuple(self.series) if self.series else self.patterns
        for tag, (K, b), z, rho in itertools.product(tags, self.cost_sets, self.z, self.rho):
            means = self.demand_series(tag)
            if self.kind == "poisson":
                model = DemandModel.poisson(means)
                cid = f"{tag}_K{K:g}_b{b:g}_z{z:g}"
            else:
                model = DemandModel.normal(means, cv=rho)
                cid = f"{tag}_rho{rho:g}_K{K:g}_b{b:g}_z{z:g}"
            inst = Instance(model, CostParams(K, z, self.h, b), q_max=self.q_max,
                            partitions=self.partitions, name=cid)
            yield cid, {"pattern": tag, "K": K, "b": b, "z": z, "rho": rho}, inst

    def __len__(self):
        n_tags = len(self.series) if self.series else len(self.patterns)
        return n_tags * len(self.cost_sets) * len(self.z) * len(self.rho)


def small_grid(**kw) -> ExperimentGrid:
    """The 6-period Poisson set: rates in [1, 7], Q_max = 9."""
    return ExperimentGrid(kind="poisson", T=6, q_max=9, partitions=10, **kw)


def large_grid(**kw) -> ExperimentGrid:
    """The 25-period normal set with means in [0, 200] and sd = rho * mean."""
    cost_sets = tuple(itertools.product(LARGE_K, LARGE_B))
    return ExperimentGrid(kind="normal", T=25, cost_sets=cost_sets, rho=LARGE_RHO,
                          lo=0.0, hi=200.0, partitions=10, **kw)


def generate_testset(grid: ExperimentGrid, out_dir, overwrite: bool = False):
    """Write one instance file per grid cell; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for cid, _, inst in grid.cells():
        path = os.path.join(out_dir, cid + ".inst")
        if os.path.exists(path) and not overwrite:
            raise FileExistsError(f"{path} already exists")
        save_instance(inst, path)
        paths.append(path)
    return paths
