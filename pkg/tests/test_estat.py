import math

import numpy as np
import pytest
from scipy import special

from cmzlab import rv
from cmzlab.errors import ContractViolationError, DomainError, InsufficientDataError
from cmzlab.estat import (
    CorrelationCurve,
    asip_exponent_pair,
    asip_rate,
    block_sums,
    bump_observable,
    clt_diagnostic,
    correlation,
    default_lag_grid,
    empirical_tail,
    green_kubo_variance,
    predicted_correlation,
    smooth_bump,
    zeta,
)
from cmzlab.tower.model import TailCurve


def test_empirical_tail_point_mass():
    curve = empirical_tail(np.full(1000, 5))
    for n in range(5):
        assert curve.value(n) == 1.0
    assert curve.value(5) == 0.0


def test_empirical_tail_pareto_oracle():
    # X = ceil(U^{-1/2}) has P(X > n) = n^-2 exactly at integers >= 1
    rng = np.random.default_rng(42)
    u = rng.uniform(size=10**6)
    x = np.ceil(u ** -0.5).astype(np.int64)
    x = np.minimum(x, 10**6)
    curve = empirical_tail(x)
    for n in (2, 10, 100):
        surv, se = curve.value(n), float(curve.stderr[n])
        assert abs(surv - n**-2.0) <= 4 * se


def test_empirical_tail_empty_raises():
    with pytest.raises(InsufficientDataError):
        empirical_tail(np.array([], dtype=np.int64))


def test_correlation_constant_is_zero():
    f = np.full(5000, 3.7)
    curve = correlation(f, lags=[0, 1, 5, 10])
    assert np.allclose(curve.estimates, 0.0, atol=1e-12 * 3.7**2)


def test_correlation_iid_bernoulli():
    rng = np.random.default_rng(7)
    f = (rng.uniform(size=2 * 10**5) < 0.3).astype(float)
    curve = correlation(f, lags=[0, 1, 2, 5, 13], batch_length=10**4)
    assert curve.value(0) >= 0.0
    assert curve.value(0) == pytest.approx(0.3 * 0.7, abs=0.005)
    for i, n in enumerate(curve.lags):
        if n >= 1:
            assert abs(curve.estimates[i]) <= 4 * curve.stderr[i]


def test_correlation_bilinearity_exact():
    rng = np.random.default_rng(3)
    f = rng.normal(size=4000)
    g = rng.normal(size=4000)
    base = correlation(f, g, lags=[1, 4, 9], batch_length=500)
    scaled = correlation(2.5 * f + 7.0, g, lags=[1, 4, 9], batch_length=500)
    assert np.allclose(scaled.estimates, 2.5 * base.estimates, rtol=1e-10, atol=1e-12)


def test_correlation_too_short():
    with pytest.raises(InsufficientDataError):
        correlation(np.ones(50), lags=[10])


def test_default_lag_grid():
    lags = default_lag_grid(30)
    assert list(lags) == [0, 1, 2, 3, 5, 8, 13, 21, 30]


def test_predicted_correlation_direct_sum_oracle():
    # independent oracles: direct summation and Hurwitz zeta(3, 10)
    direct = 2.0 * float(np.sum(np.arange(10, 10**7, dtype=float) ** -3.0))
    hurwitz = 2.0 * float(special.zeta(3.0, 10))
    assert direct == pytest.approx(hurwitz, rel=1e-9)
    val = predicted_correlation(rv.RegVarSpec(index=3.0), h_bar=2.0, int_f=1.0, int_g=1.0, n=10)
    assert val == pytest.approx(hurwitz, rel=1e-6)
    assert val == pytest.approx(0.01104983, abs=2e-7)


def test_predicted_correlation_zero_mean():
    assert predicted_correlation(rv.RegVarSpec(index=3.0), 2.0, 0.0, 1.0, 10) == 0.0


def test_predicted_correlation_exact_curve_and_support():
    surv = np.array([1.0, 0.5, 0.25, 0.0])
    curve = TailCurve(np.arange(4), surv, kind="A", exact=True)
    assert predicted_correlation(curve, 2.0, 1.0, 1.0, 1) == pytest.approx(2.0 * 0.75)
    assert predicted_correlation(curve, 2.0, 1.0, 1.0, 10) == 0.0


def test_zeta_paper_cases():
    assert zeta(3.0, 10) == pytest.approx(0.001, rel=1e-12)
    assert zeta(2.0, 10) == pytest.approx(0.01 * math.log(10), rel=1e-12)
    assert zeta(1.5, 100) == pytest.approx(0.01, rel=1e-12)
    with pytest.raises(DomainError):
        zeta(1.0, 10)


def test_zeta_dominated_by_inverse_n():
    # each branch is <= 1/n for a >= 3/2 (false below, where 2(a-1) < 1)
    for a in (1.5, 1.7, 2.0, 2.5, 4.0):
        for n in (3, 10, 100, 10**4):
            assert zeta(a, n) <= 1.0 / n + 1e-15


def test_green_kubo_alternating_oracle():
    # C(n) = (-1)^n 2^-n: c^2 = 1 + 2 * sum (-1/2)^n = 1 - 2/3 = 1/3
    L = 40
    lags = np.arange(L + 1)
    est = (-0.5) ** lags
    curve = CorrelationCurve(lags, est, np.full(L + 1, 1e-12), n_samples=10**6)
    res = green_kubo_variance(curve)
    assert res.c2 == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_green_kubo_pure_variance():
    lags = np.arange(21)
    est = np.zeros(21)
    est[0] = 1.0
    curve = CorrelationCurve(lags, est, np.full(21, 1e-9), n_samples=10**6)
    assert green_kubo_variance(curve).c2 == pytest.approx(1.0)


def test_green_kubo_iid_oracle():
    rng = np.random.default_rng(11)
    f = rng.normal(size=4 * 10**5)
    curve = correlation(f - f.mean(), lags=np.arange(21), batch_length=2 * 10**4)
    res = green_kubo_variance(curve)
    assert abs(res.c2 - 1.0) <= 4 * res.stderr


def test_green_kubo_rejects_uncentered():
    lags = np.arange(11)
    curve = CorrelationCurve(lags, np.zeros(11), np.zeros(11), 100, mean_f=0.5, scale_f=1.0)
    with pytest.raises(ContractViolationError):
        green_kubo_variance(curve)


def test_asip_rate_value():
    n = int(round(math.e**3))
    val = asip_rate(3.0, 0.0, 1e-12, n)
    assert val == pytest.approx(n ** (1.0 / 3.0) * 3.0 ** (1.0 / 3.0), rel=1e-3)
    with pytest.raises(DomainError):
        asip_rate(2.0, 0.0, 0.1, 100)


def test_asip_exponent_pairs():
    # falling balls and flowers: beta=3, gamma=0 -> (1/3, 1/3); flat points: 1/alpha
    assert asip_exponent_pair(3.0, 0.0) == (pytest.approx(1 / 3), pytest.approx(1 / 3))
    alpha = (6.0 + 2.0) / (6.0 - 2.0) + 1.0  # beta=6 flat-point family
    assert asip_exponent_pair(alpha, 0.0) == (pytest.approx(1 / alpha), pytest.approx(1 / alpha))


def test_clt_diagnostic_gaussian_blocks():
    rng = np.random.default_rng(5)
    blocks = rng.normal(size=1000)
    rep = clt_diagnostic(blocks, block_length=1)
    assert rep.normality_pvalue > 1e-3
    assert not rep.degenerate


def test_clt_diagnostic_bernoulli_variance_ratio():
    rng = np.random.default_rng(4)
    p = 0.3
    vals = (rng.uniform(size=10**7) < p) - p
    table = {n: block_sums(vals, n) for n in (10**3, 10**4)}
    rep = clt_diagnostic(table)
    assert rep.variance_ratio[10**4] == pytest.approx(p * (1 - p), rel=0.05)
    assert rep.normality_pvalue > 1e-3


def test_clt_diagnostic_degenerate_and_errors():
    rep = clt_diagnostic(np.zeros(200), block_length=10)
    assert rep.degenerate and rep.variance_ratio[10] == 0.0
    with pytest.raises(InsufficientDataError):
        clt_diagnostic(np.ones(50), block_length=10)


def test_smooth_bump_support_and_observable():
    assert smooth_bump(np.array([-1.0, 1.0, 2.0])).tolist() == [0.0, 0.0, 0.0]
    assert smooth_bump(0.0) == pytest.approx(1.0)
    obs = bump_observable("f", center=(0.0, 0.0), width=(1.0, 0.5), offset=0.2, amplitude=0.8)
    vals = obs(np.array([0.0, 5.0]), np.array([0.0, 0.0]))
    assert vals[0] == pytest.approx(1.0)
    assert vals[1] == pytest.approx(0.2)
    assert np.all(np.abs(vals) <= obs.sup_bound)


def test_clt_pvalues_uniform_under_repetition():
    from scipy import stats

    rng = np.random.default_rng(12)
    ps = []
    for _ in range(200):
        blocks = rng.normal(size=300)
        ps.append(clt_diagnostic(blocks, block_length=1).normality_pvalue)
    assert stats.kstest(ps, "uniform").pvalue > 1e-3


def test_mean_zero_observable_running_mean():
    obs = bump_observable("f", center=(0.0,), width=(1.0,), offset=0.0, amplitude=1.0)
    rng = np.random.default_rng(3)
    xs = rng.uniform(-2.0, 2.0, size=10**5)
    vals = obs(xs)
    centered = vals - vals.mean()
    running = np.cumsum(centered) / np.arange(1, centered.size + 1)
    assert abs(running[-1]) < 1e-12
    assert np.all(np.abs(running[10**3 :]) < 0.05)
