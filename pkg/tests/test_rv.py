import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from cmzlab.errors import DivergenceError, DomainError, InsufficientDataError
from cmzlab.rv import RegVarSpec, estimate_index, evaluate, ratio_limit_check, tail_sum_and_integral


def test_evaluate_pure_power():
    spec = RegVarSpec(index=3.0)
    assert evaluate(spec, 10.0) == pytest.approx(0.001, rel=1e-15)


def test_evaluate_log_power_at_e():
    spec = RegVarSpec(index=2.0, modifier="power-times-log-power", beta=2.0, cutoff=1.5)
    assert evaluate(spec, math.e) == pytest.approx(math.e**-2, rel=1e-12)


def test_evaluate_karamata_quadrature_oracle():
    # c == 0, a == -2, y = 1: r(x) = exp(int_1^x -2/s ds) = x^-2
    spec = RegVarSpec.from_karamata(c=lambda x: 0.0, a=lambda x: -2.0, limit_index=2.0, cutoff=1.0)
    expected, _ = integrate.quad(lambda s: -2.0 / s, 1.0, 4.0)
    assert evaluate(spec, 4.0) == pytest.approx(math.exp(expected), rel=1e-10)
    assert evaluate(spec, 4.0) == pytest.approx(0.0625, rel=1e-10)


def test_evaluate_below_cutoff_raises():
    spec = RegVarSpec(index=2.0, cutoff=5.0)
    with pytest.raises(DomainError):
        evaluate(spec, 4.0)


def test_evaluate_positive_on_domain():
    for spec in (
        RegVarSpec(index=3.0),
        RegVarSpec(index=2.0, modifier="power-times-log-power", beta=-1.5, cutoff=2.0),
        RegVarSpec(index=1.2, modifier="power-times-exp-log-power", gamma=0.7),
    ):
        xs = np.geomspace(spec.cutoff, 1e8, 50)
        assert np.all(np.atleast_1d(evaluate(spec, xs)) > 0)


def test_exp_log_power_gamma_validation():
    with pytest.raises(DomainError):
        RegVarSpec(index=1.0, modifier="power-times-exp-log-power", gamma=1.0)


def test_ratio_limit_pure_power_exact():
    spec = RegVarSpec(index=2.0)
    rep = ratio_limit_check(spec, lam=2.0, xs=[10.0, 100.0, 1000.0])
    assert np.allclose(rep.ratios, 0.25, rtol=1e-14)
    assert rep.converged


def test_ratio_limit_identity_lambda_one():
    spec = RegVarSpec(index=1.5, modifier="power-times-exp-log-power", gamma=0.4)
    rep = ratio_limit_check(spec, lam=1.0, xs=[2.0, 5.0, 50.0])
    assert np.allclose(rep.ratios, 1.0, rtol=1e-14)
    assert rep.converged


def test_ratio_limit_log_power_closed_form():
    # r(x) = x^-1 log x: r(10x)/r(x) = 0.1 * (1 + log 10 / log x), decreasing to 0.1
    spec = RegVarSpec(index=1.0, modifier="power-times-log-power", beta=1.0, cutoff=2.0)
    xs = np.geomspace(10.0, 1e8, 8)
    rep = ratio_limit_check(spec, lam=10.0, xs=xs)
    closed = 0.1 * (1.0 + math.log(10.0) / np.log(xs))
    assert np.allclose(rep.ratios, closed, rtol=1e-12)
    assert np.all(np.diff(rep.ratios) < 0)
    assert rep.ratios[-1] == pytest.approx(0.1, abs=0.02)


def test_ratio_inverse_identity():
    # r(lam x)/r(x) * r(x)/r(lam x) = 1 exactly, applied at shifted grids
    spec = RegVarSpec(index=2.5, modifier="power-times-log-power", beta=3.0, cutoff=2.0)
    xs = np.geomspace(10.0, 1e6, 12)
    lam = 3.0
    fwd = ratio_limit_check(spec, lam, xs).ratios
    back = ratio_limit_check(spec, 1.0 / lam, lam * xs).ratios
    assert np.allclose(fwd * back, 1.0, rtol=1e-9)


def test_estimate_index_pure_power_machine_precision():
    xs = np.geomspace(10.0, 1e4, 40)
    samples = np.column_stack([xs, xs**-3])
    fit = estimate_index(samples, window=(10.0, 1e4))
    assert fit.alpha == pytest.approx(3.0, abs=1e-9)
    assert fit.stderr < 1e-9


def test_estimate_index_log_corrected():
    # analytic log-log slope of x^-2 (log x)^2 is -2 + 2/log x; midwindow value
    xs = np.geomspace(1e4, 1e8, 60)
    samples = np.column_stack([xs, xs**-2 * np.log(xs) ** 2])
    fit = estimate_index(samples, window=(1e4, 1e8))
    expected = 2.0 - 2.0 / math.log(1e6)
    assert fit.alpha == pytest.approx(expected, abs=0.02)


def test_estimate_index_constant_is_zero():
    xs = np.geomspace(10.0, 1e3, 10)
    fit = estimate_index(np.column_stack([xs, np.full_like(xs, 5.0)]), window=(10.0, 1e3))
    assert fit.alpha == pytest.approx(0.0, abs=1e-12)


def test_estimate_index_errors():
    xs = np.array([10.0, 20.0, 30.0])
    with pytest.raises(InsufficientDataError):
        estimate_index(np.column_stack([xs, xs]), window=(100.0, 200.0))
    bad = np.column_stack([xs, np.array([1.0, -1.0, 1.0])])
    with pytest.raises(DomainError):
        estimate_index(bad, window=(10.0, 30.0))


def test_tail_sum_alpha2_n10():
    # oracle: sum_{k>=10} k^-2 = polygamma(1, 10)
    spec = RegVarSpec(index=2.0)
    res = tail_sum_and_integral(spec, n=10)
    oracle = float(special.polygamma(1, 10))
    assert res.integral == pytest.approx(0.1, rel=1e-12)
    assert res.sum == pytest.approx(oracle, rel=1e-7)
    assert res.ratio == pytest.approx(oracle / 0.1, rel=1e-6)
    assert f"{res.sum:.6f}" == "0.105166"


def test_tail_sum_alpha2_large_n_ratio():
    spec = RegVarSpec(index=2.0)
    res = tail_sum_and_integral(spec, n=10**4)
    assert 1.0 <= res.ratio <= 1.0001


def test_tail_sum_alpha3_zeta():
    spec = RegVarSpec(index=3.0)
    res = tail_sum_and_integral(spec, n=1)
    assert res.integral == pytest.approx(0.5, rel=1e-12)
    assert res.sum == pytest.approx(float(special.zeta(3.0)), rel=1e-7)


def test_tail_sum_divergence():
    with pytest.raises(DivergenceError):
        tail_sum_and_integral(RegVarSpec(index=1.0), n=10)


def test_tail_sum_sandwich_on_monotone_specs():
    # the sandwich is asserted inside the call; also verify externally
    for spec in (
        RegVarSpec(index=2.0),
        RegVarSpec(index=1.5),
        RegVarSpec(index=2.0, modifier="power-times-log-power", beta=-2.0, cutoff=2.0),
        RegVarSpec(index=3.0, modifier="power-times-exp-log-power", gamma=0.3),
    ):
        n = max(4, int(spec.cutoff) + 1)
        res = tail_sum_and_integral(spec, n=n)
        r_n = evaluate(spec, float(n))
        assert res.integral <= res.sum <= res.integral + r_n + 1e-12


def test_karamata_twin_reproduces_closed_form():
    for spec in (
        RegVarSpec(index=2.0),
        RegVarSpec(index=2.0, modifier="power-times-log-power", beta=2.0, cutoff=2.0),
        RegVarSpec(index=1.3, modifier="power-times-exp-log-power", gamma=0.6, scale=4.0),
    ):
        twin = spec.with_karamata()
        xs = np.geomspace(spec.cutoff * 1.5, 1e6, 11)
        assert twin.karamata_mismatch(xs) < 1e-9


def test_json_round_trip():
    spec = RegVarSpec(index=2.5, modifier="power-times-log-power", beta=1.0, scale=2.0, cutoff=3.0)
    assert RegVarSpec.from_json(spec.to_json()) == spec


@settings(max_examples=30, deadline=None)
@given(
    alpha=st.floats(0.2, 5.0),
    scale=st.floats(0.1, 10.0),
    lo=st.floats(10.0, 100.0),
)
def test_index_recovery_property(alpha, scale, lo):
    spec = RegVarSpec(index=alpha, scale=scale)
    xs = np.geomspace(lo, lo * 1e3, 25)
    fit = estimate_index(np.column_stack([xs, np.atleast_1d(evaluate(spec, xs))]), (lo, lo * 1e3))
    assert fit.alpha == pytest.approx(alpha, abs=1e-8)
