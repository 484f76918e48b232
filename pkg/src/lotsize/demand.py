"""Demand distributions, period-range convolutions and first-order loss functions.

Three demand kinds are supported: Poisson (per-period rates), Normal (per-period
means and standard deviations) and Empirical (explicit integer pmfs). Periods
are independent. Period indices are 1-based throughout the package.

The piecewise-linear machinery lower-bounds the complementary loss
``E[max(x - d, 0)]`` by tangent segments built from an equal-probability
partition of the demand support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

POISSON_TAIL = 1e-12
KINDS = ("poisson", "normal", "empirical")


@dataclass(frozen=True)
class CostParams:
    """Fixed ordering cost K, unit cost z, holding h and backorder penalty b."""

    K: float
    z: float
    h: float
    b: float

    def __post_init__(self):
        for name in ("K", "z", "h", "b"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"cost parameter {name} must be >= 0, got {value}")

    def order_cost(self, q):
        """Ordering cost c(q): K + z*q for q > 0, 0 otherwise."""
        return self.K + self.z * q if q > 0 else 0.0


@dataclass(frozen=True)
class DemandModel:
    """Independent per-period demand.

    Build instances with :meth:`poisson`, :meth:`normal` or :meth:`empirical`
    rather than calling the constructor directly.
    """

    kind: str
    means: tuple
    stds: tuple = ()
    pmfs: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown demand kind {self.kind!r}")
        if len(self.means) < 1:
            raise ValueError("demand horizon must be at least one period")
        if any(not (m >= 0) for m in self.means):
            raise ValueError("demand means/rates must be >= 0")
        if self.kind == "normal":
            if len(self.stds) != len(self.means):
                raise ValueError("normal demand needs one std per period")
            if any(not (s >= 0) for s in self.stds):
                raise ValueError("normal demand stds must be >= 0")
        if self.kind == "empirical":
            if len(self.pmfs) != len(self.means):
                raise ValueError("empirical demand needs one pmf per period")
            for p in self.pmfs:
                if any(v < 0 for v in p) or abs(sum(p) - 1.0) > 1e-9:
                    raise ValueError("empirical pmfs must be nonnegative and sum to 1")

    @classmethod
    def poisson(cls, rates):
        return cls("poisson", tuple(float(r) for r in rates))

    @classmethod
    def normal(cls, means, cv=None, stds=None):
        """Normal demand with ``stds`` given explicitly or as ``cv * mean``."""
        means = tuple(float(m) for m in means)
        if (cv is None) == (stds is None):
            raise ValueError("give exactly one of cv or stds")
        if stds is None:
            stds = tuple(cv * m for m in means)
        return cls("normal", means, tuple(float(s) for s in stds))

    @classmethod
    def empirical(cls, pmfs):
        pmfs = tuple(tuple(float(v) for v in p) for p in pmfs)
        means = tuple(float(np.dot(np.arange(len(p)), p)) for p in pmfs)
        return cls("empirical", means, (), pmfs)

    @property
    def T(self):
        return len(self.means)

    def period(self, t):
        return convolve(self, t, t)


@dataclass(frozen=True)
class RangeDemand:
    """Distribution of total demand over periods j..t.

    ``pmf`` is populated for discrete kinds (Poisson, Empirical) and is indexed
    from zero; Normal ranges carry ``mean`` and ``std`` only.
    """

    kind: str
    mean: float
    std: float = 0.0
    pmf: tuple | None = None
    j: int = 1
    t: int = 1

    @property
    def discrete(self):
        return self.kind != "normal"

    def pmf_array(self):
        """Integer pmf starting at 0; Normal demand is discretized by rounding."""
        if self.kind == "poisson":
            return _poisson_pmf(self.mean)
        if self.kind == "empirical":
            return np.asarray(self.pmf, dtype=float)
        return _discretized_normal_pmf(self.mean, self.std)

    def quantile(self, p):
        if self.kind == "normal":
            if self.std == 0:
                return self.mean
            return float(stats.norm.ppf(p, self.mean, self.std))
        cdf = np.cumsum(self.pmf_array())
        return int(min(np.searchsorted(cdf, p - 1e-15), len(cdf) - 1))

    def upper(self, tail=1e-9):
        """Integer upper bound holding all but ``tail`` of the probability mass."""
        if self.kind == "normal":
            if self.std == 0:
                return int(math.ceil(self.mean))
            return int(math.ceil(stats.norm.isf(tail, self.mean, self.std)))
        return int(self.quantile(1.0 - tail))


@lru_cache(maxsize=4096)
def _poisson_pmf_cached(rate):
    if rate == 0:
        return np.array([1.0])
    kmax = int(stats.poisson.ppf(1.0 - POISSON_TAIL, rate))
    pmf = stats.poisson.pmf(np.arange(kmax + 1), rate)
    pmf /= pmf.sum()
    pmf.setflags(write=False)
    return pmf


def _poisson_pmf(rate):
    return _poisson_pmf_cached(float(rate))


@lru_cache(maxsize=4096)
def _discretized_normal_pmf(mean, std):
    # Pr[k - 0.5 < d <= k + 0.5], with all mass below 0.5 lumped at zero
    if std == 0:
        pmf = np.zeros(max(int(math.floor(mean + 0.5)), 0) + 1)
        pmf[-1] = 1.0
        return pmf
    kmax = max(int(math.ceil(stats.norm.isf(POISSON_TAIL, mean, std))), 0)
    edges = np.arange(kmax + 1) + 0.5
    cdf = stats.norm.cdf(edges, mean, std)
    pmf = np.diff(np.concatenate(([0.0], cdf)))
    pmf = np.clip(pmf, 0.0, None)
    pmf /= pmf.sum()
    pmf.setflags(write=False)
    return pmf


def convolve(model: DemandModel, j: int, t: int) -> RangeDemand:
    """Distribution of d_j + ... + d_t (1-based, inclusive)."""
    if not (1 <= j <= t <= model.T):
        raise IndexError(f"period range ({j}, {t}) outside 1..{model.T}")
    return _convolve(model, j, t)


@lru_cache(maxsize=16384)
def _convolve(model, j, t):
    mean = float(sum(model.means[j - 1:t]))
    if model.kind == "poisson":
        return RangeDemand("poisson", mean, math.sqrt(mean), None, j, t)
    if model.kind == "normal":
        var = sum(s * s for s in model.stds[j - 1:t])
        return RangeDemand("normal", mean, math.sqrt(var), None, j, t)
    pmf = np.array(model.pmfs[j - 1])
    for k in range(j, t):
        pmf = np.convolve(pmf, model.pmfs[k])
    pmf = pmf / pmf.sum()
    var = float(np.dot((np.arange(len(pmf)) - mean) ** 2, pmf))
    return RangeDemand("empirical", mean, math.sqrt(var), tuple(pmf), j, t)


def _discrete_loss_pair(x, pmf):
    x = np.asarray(x, dtype=float)
    k = np.arange(len(pmf))
    diff = k[None, :] - x.reshape(-1, 1)
    short = np.maximum(diff, 0.0) @ pmf
    held = np.maximum(-diff, 0.0) @ pmf
    return short.reshape(x.shape), held.reshape(x.shape)


def _normal_loss(x, mean, std):
    x = np.asarray(x, dtype=float)
    if std == 0:
        return np.maximum(mean - x, 0.0)
    u = (x - mean) / std
    return std * (stats.norm.pdf(u) - u * stats.norm.sf(u))


def loss(x, d: RangeDemand):
    """First-order loss E[max(d - x, 0)] (expected units short)."""
    if d.discrete:
        out = _discrete_loss_pair(x, d.pmf_array())[0]
    else:
        out = _normal_loss(x, d.mean, d.std)
    return float(out) if np.ndim(out) == 0 else out


def complementary_loss(x, d: RangeDemand):
    """Complementary loss E[max(x - d, 0)] (expected units held)."""
    if d.discrete:
        out = _discrete_loss_pair(x, d.pmf_array())[1]
    else:
        out = _normal_loss(x, d.mean, d.std) + np.asarray(x, dtype=float) - d.mean
    return float(out) if np.ndim(out) == 0 else out


def expected_immediate_cost(y, t: int, model: DemandModel, costs: CostParams):
    """L_t(y) = h*E[max(y - d_t, 0)] + b*E[max(d_t - y, 0)]."""
    d = convolve(model, t, t)
    return costs.h * complementary_loss(y, d) + costs.b * loss(y, d)


def discrete_immediate_cost(y, pmf, costs: CostParams):
    """Vectorized L(y) for integer levels ``y`` under an integer pmf."""
    y = np.asarray(y, dtype=np.int64)
    pmf = np.asarray(pmf, dtype=float)
    cdf = np.cumsum(pmf)
    first = np.cumsum(np.arange(len(pmf)) * pmf)
    mean = first[-1]
    # held(y) = sum_{k<y} (y-k) p_k = y*F(y-1) - M(y-1)
    idx = np.clip(y - 1, -1, len(pmf) - 1)
    F = np.where(idx >= 0, cdf[np.maximum(idx, 0)], 0.0)
    M = np.where(idx >= 0, first[np.maximum(idx, 0)], 0.0)
    held = y * F - M
    short = held - y + mean
    return costs.h * held + costs.b * short


# ---------------------------------------------------------------------------
# piecewise-linear lower bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Equal-probability partition of a demand distribution into N regions."""

    n: int
    boundaries: tuple
    probs: tuple
    cond_means: tuple
    mean: float

    @property
    def cum_probs(self):
        return np.cumsum(self.probs)

    @property
    def cum_first_moments(self):
        return np.cumsum(np.asarray(self.probs) * np.asarray(self.cond_means))


def build_partition(d: RangeDemand, n: int) -> Partition:
    """Split the support of ``d`` at its i/N quantiles.

    For discrete distributions an atom straddling a quantile is split between
    the adjacent regions so that every region carries mass exactly 1/N.
    """
    if n < 1:
        raise ValueError("partition needs at least one region")
    return _build_partition(d, int(n))


@lru_cache(maxsize=16384)
def _build_partition(d, n):
    if not d.discrete:
        probs = np.full(n, 1.0 / n)
        if d.std == 0:
            return Partition(n, (d.mean,) * (n - 1), tuple(probs), (d.mean,) * n, d.mean)
        qs = stats.norm.ppf(np.arange(1, n) / n)
        z = np.concatenate(([-np.inf], qs, [np.inf]))
        phi = stats.norm.pdf(z)
        cond = d.mean + d.std * (phi[:-1] - phi[1:]) * n
        bounds = d.mean + d.std * qs
        return Partition(n, tuple(bounds), tuple(probs), tuple(cond), d.mean)

    pmf = d.pmf_array()
    k = np.arange(len(pmf), dtype=float)
    hi = np.cumsum(pmf)
    hi[-1] = 1.0
    lo = np.concatenate(([0.0], hi[:-1]))
    cuts = np.arange(n + 1) / n
    # mass of atom k falling in region i = |[lo_k, hi_k] intersect [cut_i, cut_{i+1}]|
    share = np.clip(np.minimum(hi[None, :], cuts[1:, None]) - np.maximum(lo[None, :], cuts[:-1, None]), 0.0, None)
    probs = share.sum(axis=1)
    cond = (share @ k) / probs
    bounds = [float(np.searchsorted(hi, c - 1e-15)) for c in cuts[1:-1]]
    mean = float(np.dot(k, pmf))
    return Partition(n, tuple(bounds), tuple(probs), tuple(cond), mean)


def piecewise_loss_lb(x, part: Partition):
    """Piecewise-linear lower bounds of (complementary loss, loss) at ``x``.

    The complementary bound is max over i of sum_{k<=i} p_k (x - E[d|region k]),
    including the empty sum 0; the loss bound follows from complementarity.
    """
    held = _held_lb(np.asarray(x, dtype=float), part)
    short = held - np.asarray(x, dtype=float) + part.mean
    if np.ndim(held) == 0:
        return float(held), float(short)
    return held, short


def _held_lb(x, part):
    P, M = _segments(part)
    i = np.searchsorted(np.asarray(part.cond_means), x, side="right")
    return P[i] * x - M[i]


@lru_cache(maxsize=16384)
def _segments(part):
    P = np.concatenate(([0.0], part.cum_probs))
    M = np.concatenate(([0.0], part.cum_first_moments))
    return P, M


def piecewise_cost(y, part: Partition, costs: CostParams):
    """h * lower-bounded held + b * lower-bounded short, vectorized over ``y``."""
    y = np.asarray(y, dtype=float)
    held = _held_lb(y, part)
    return (costs.h + costs.b) * held - costs.b * y + costs.b * part.mean
