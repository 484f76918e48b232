import math

import numpy as np
import pytest
from scipy import stats

from lotsize.demand import (
    CostParams,
    DemandModel,
    build_partition,
    complementary_loss,
    convolve,
    discrete_immediate_cost,
    expected_immediate_cost,
    loss,
    piecewise_cost,
    piecewise_loss_lb,
)
from oracles import exact_loss_sum

EX2 = DemandModel.poisson([2, 1, 5, 3])


def test_cost_params_reject_negative():
    with pytest.raises(ValueError, match="h"):
        CostParams(1, 0, -1, 2)
    with pytest.raises(ValueError):
        CostParams(float("nan"), 0, 1, 2)


def test_order_cost():
    c = CostParams(10, 2, 1, 5)
    assert c.order_cost(0) == 0.0
    assert c.order_cost(3) == 16


def test_demand_model_validation():
    with pytest.raises(ValueError):
        DemandModel.poisson([])
    with pytest.raises(ValueError):
        DemandModel.poisson([1, -2])
    with pytest.raises(ValueError):
        DemandModel.empirical([[0.5, 0.4]])
    with pytest.raises(ValueError):
        DemandModel.normal([1, 2])


def test_convolve_poisson_additivity():
    assert convolve(EX2, 1, 2).mean == 3
    assert convolve(EX2, 3, 3).mean == 5
    pmf = convolve(EX2, 1, 2).pmf_array()
    k = np.arange(len(pmf))
    assert np.allclose(pmf, stats.poisson.pmf(k, 3), atol=1e-12)


def test_convolve_normal_variance():
    d = convolve(DemandModel.normal([10, 20], cv=0.1), 1, 2)
    assert d.mean == 30
    assert d.std == pytest.approx(math.sqrt(1 + 4))


def test_convolve_empirical():
    m = DemandModel.empirical([[0.5, 0.5], [0.25, 0.75]])
    d = convolve(m, 1, 2)
    assert np.allclose(d.pmf_array(), [0.125, 0.5, 0.375])
    assert d.mean == pytest.approx(1.25)


def test_convolve_range_errors():
    with pytest.raises(IndexError):
        convolve(EX2, 0, 2)
    with pytest.raises(IndexError):
        convolve(EX2, 3, 2)
    with pytest.raises(IndexError):
        convolve(EX2, 1, 5)


def test_loss_examples():
    d3 = convolve(DemandModel.poisson([3]), 1, 1)
    assert loss(0, d3) == pytest.approx(3.0, abs=1e-10)
    assert loss(500, d3) == pytest.approx(0.0, abs=1e-12)
    d20 = convolve(DemandModel.poisson([20]), 1, 1)
    assert loss(20, d20) == pytest.approx(exact_loss_sum(20, 20), abs=1e-10)


def test_complementary_loss_examples():
    d3 = convolve(DemandModel.poisson([3]), 1, 1)
    assert complementary_loss(0, d3) == pytest.approx(0.0, abs=1e-12)
    assert complementary_loss(5, d3) == pytest.approx(loss(5, d3) + 5 - 3, abs=1e-9)
    brute = sum((5 - k) * stats.poisson.pmf(k, 3) for k in range(5))
    assert complementary_loss(5, d3) == pytest.approx(brute, abs=1e-10)


def test_normal_loss_matches_integration():
    d = convolve(DemandModel.normal([50], stds=[10]), 1, 1)
    for x in (30.0, 50.0, 65.5):
        ref = stats.norm.expect(lambda w: max(w - x, 0.0), loc=50, scale=10)
        assert loss(x, d) == pytest.approx(ref, abs=1e-7)


def test_immediate_cost_examples():
    m = DemandModel.poisson([2])
    c = CostParams(0, 0, 1, 3)
    assert expected_immediate_cost(0, 1, m, c) == pytest.approx(6.0, abs=1e-10)
    d = convolve(m, 1, 1)
    ref = sum(((3 - k) if k < 3 else 3 * (k - 3)) * stats.poisson.pmf(k, 2) for k in range(200))
    assert expected_immediate_cost(3, 1, m, c) == pytest.approx(ref, abs=1e-10)
    ys = np.arange(-10, 11)
    vec = discrete_immediate_cost(ys, d.pmf_array(), c)
    assert np.allclose(vec, [expected_immediate_cost(y, 1, m, c) for y in ys], atol=1e-10)


def test_immediate_cost_convex():
    m = DemandModel.poisson([4])
    c = CostParams(0, 0, 1, 7)
    L = np.array([expected_immediate_cost(y, 1, m, c) for y in range(-11, 12)])
    assert np.all(L[2:] - 2 * L[1:-1] + L[:-2] >= -1e-9)


def test_partition_single_region():
    for d in (convolve(EX2, 1, 3), convolve(DemandModel.normal([5], cv=0.3), 1, 1)):
        p = build_partition(d, 1)
        assert p.probs[0] == pytest.approx(1.0)
        assert p.cond_means[0] == pytest.approx(d.mean, rel=1e-9)


def test_partition_poisson_conditional_means():
    # oracle: split the unit interval of cumulative mass at i/4 and integrate k over each piece
    rate, n = 3.0, 4
    k = np.arange(60)
    pmf = stats.poisson.pmf(k, rate)
    pmf /= pmf.sum()
    cdf_hi = np.cumsum(pmf)
    cdf_lo = cdf_hi - pmf
    expected = []
    for i in range(n):
        a, b = i / n, (i + 1) / n
        share = np.clip(np.minimum(cdf_hi, b) - np.maximum(cdf_lo, a), 0, None)
        expected.append(float(share @ k) / float(share.sum()))
    part = build_partition(convolve(DemandModel.poisson([rate]), 1, 1), n)
    assert np.allclose(part.cond_means, expected, atol=1e-9)
    assert np.allclose(part.probs, 0.25)


def test_partition_normal_symmetry():
    part = build_partition(convolve(DemandModel.normal([0.0], stds=[1.0]), 1, 1), 2)
    assert part.probs == pytest.approx((0.5, 0.5))
    assert part.cond_means[0] == pytest.approx(-part.cond_means[1])
    assert part.cond_means[1] == pytest.approx(math.sqrt(2 / math.pi))


def test_partition_rejects_zero_regions():
    with pytest.raises(ValueError):
        build_partition(convolve(EX2, 1, 1), 0)


@pytest.mark.parametrize("n", [5, 10, 20])
def test_partition_total_expectation(n):
    for d in (convolve(EX2, 1, 4), convolve(DemandModel.normal([30, 40], cv=0.2), 1, 2)):
        p = build_partition(d, n)
        assert sum(p.probs) == pytest.approx(1.0, abs=1e-12)
        assert float(np.dot(p.probs, p.cond_means)) == pytest.approx(d.mean, rel=1e-6)


def test_piecewise_bound_asymptote_and_dominance():
    d = convolve(DemandModel.poisson([5]), 1, 1)
    part = build_partition(d, 10)
    held, short = piecewise_loss_lb(1e6, part)
    assert held == pytest.approx(1e6 - 5, rel=1e-12)
    xs = np.linspace(-5, 20, 501)
    h_lb, s_lb = piecewise_loss_lb(xs, part)
    assert np.all(h_lb >= -1e-12)
    assert np.all(h_lb <= complementary_loss(xs, d) + 1e-9)
    assert np.all(s_lb <= loss(xs, d) + 1e-9)


def test_piecewise_gap_shrinks_with_n():
    d = convolve(DemandModel.poisson([5]), 1, 1)
    xs = np.linspace(-5, 20, 1001)
    exact = complementary_loss(xs, d)
    g10 = np.max(exact - piecewise_loss_lb(xs, build_partition(d, 10))[0])
    g20 = np.max(exact - piecewise_loss_lb(xs, build_partition(d, 20))[0])
    assert g20 <= g10


def test_piecewise_bound_tight_at_segment_point():
    # each linear piece touches the exact convex function where it is active
    d = convolve(DemandModel.normal([100], cv=0.2), 1, 1)
    part = build_partition(d, 5)
    edges = np.concatenate(([d.mean - 8 * d.std], part.boundaries, [d.mean + 8 * d.std]))
    for a, b in zip(edges[:-1], edges[1:]):
        xs = np.linspace(a, b, 400)
        gap = complementary_loss(xs, d) - piecewise_loss_lb(xs, part)[0]
        assert gap.min() < 1e-6 or b - a < 1e-9


def test_piecewise_cost_matches_parts():
    d = convolve(EX2, 2, 3)
    part = build_partition(d, 8)
    c = CostParams(5, 0, 1, 3)
    ys = np.arange(-3, 15)
    held, short = piecewise_loss_lb(ys, part)
    assert np.allclose(piecewise_cost(ys, part, c), c.h * held + c.b * short)
