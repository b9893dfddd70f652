"""Lookback pricing, drift signals and rate surface tests.

Frozen decimals come from 40-digit mpmath evaluations of the closed forms
(normal pdf/cdf composites and the G-ratio integrals).
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from liqzone import (
    CappedBachelier,
    CappedBlackScholes,
    CostParams,
    DeterministicDrift,
    GKernel,
    Martingale,
    QuadratureError,
    TargetZoneState,
    bachelier_lookback_price,
    bachelier_theta,
    bs_f,
    bs_theta,
    extra_rate,
    extra_rate_small_beta,
    full_rate,
    rate_surface,
    urgency,
    v1_curve_deterministic,
    v1_target_zone,
)
from liqzone.signals import _capped_extra_nodes, _panel_nodes

SMALL_COSTS = CostParams(lam=0.1, gamma=1e-5, big_gamma=1e-5, horizon=1.0, x0=1.0)
UNIT_COSTS = CostParams(lam=0.1, gamma=1.0, big_gamma=1.0, horizon=1.0, x0=1.0)
SIGMA = 0.5


def test_bachelier_theta_frozen():
    assert bachelier_theta(0.5, 0.1, SIGMA) == pytest.approx(
        0.27103369677621578, rel=1e-13)
    # vectorized call agrees with scalars
    u = np.array([0.25, 0.5, 1.0])
    vals = bachelier_theta(u, 0.1, SIGMA)
    for ui, vi in zip(u, vals):
        assert vi == pytest.approx(bachelier_theta(float(ui), 0.1, SIGMA), rel=1e-15)


def test_bachelier_price_frozen():
    assert bachelier_lookback_price(1.0, 0.1, SIGMA) == pytest.approx(
        0.30689463586327648, rel=1e-13)
    assert bachelier_lookback_price(0.25, 0.0, SIGMA) == pytest.approx(
        0.19947114020071634, rel=1e-13)


def test_bachelier_theta_is_maturity_derivative_of_price():
    u, k, h = 0.7, 0.2, 1e-5
    fd = (bachelier_lookback_price(u + h, k, SIGMA)
          - bachelier_lookback_price(u - h, k, SIGMA)) / (2.0 * h)
    assert fd == pytest.approx(bachelier_theta(u, k, SIGMA), rel=1e-7)


def test_bachelier_price_equals_integrated_theta():
    # s = w^2 substitution removes the 1/sqrt(s) endpoint singularity
    phi0 = 1.0 / math.sqrt(2.0 * math.pi)
    for u, k in ((0.5, 0.0), (1.0, 0.3)):
        def f(w, k=k):
            if w * w <= 0.0:
                return 2.0 * SIGMA * phi0 if k == 0.0 else 0.0
            return 2.0 * w * bachelier_theta(w * w, k, SIGMA)
        val, _ = quad(f, 0.0, math.sqrt(u), epsabs=1e-13, epsrel=1e-12)
        assert val == pytest.approx(bachelier_lookback_price(u, k, SIGMA), rel=1e-10)


def test_bs_f_barrier_value_and_sign():
    assert bs_f(0.49, 1.3, 1.2, SIGMA, 1.2) == pytest.approx(
        0.5 * SIGMA * 0.7, rel=1e-14)
    assert bs_f(0.49, 1.3, 1.0, SIGMA, 1.2) < bs_f(0.49, 1.3, 1.2, SIGMA, 1.2)


def test_bs_theta_frozen():
    assert bs_theta(1.0, 1.0, 1.0, SIGMA, 1.25) == pytest.approx(
        0.24843933333895867, rel=1e-13)
    assert bs_theta(0.25, 1.0, 1.0, SIGMA, 1.0) == pytest.approx(
        0.46455496504851360, rel=1e-13)


def test_bs_theta_increasing_in_level_decreasing_in_moneyness():
    base = bs_theta(0.5, 1.0, 1.0, SIGMA, 1.1)
    assert bs_theta(0.5, 1.2, 1.0, SIGMA, 1.1) > base
    assert bs_theta(0.5, 1.0, 0.9, SIGMA, 1.1) < base


def test_extra_rate_small_beta_frozen():
    assert extra_rate_small_beta(1.0, 0.0, SIGMA, 0.1) == pytest.approx(
        1.9947114020071634, rel=1e-13)


def test_v1_martingale_is_zero():
    k = GKernel.from_costs(UNIT_COSTS)
    model = Martingale(p0=1.0, sigma=SIGMA)
    st = TargetZoneState(t=0.4, m=1.0, p=1.0)
    assert v1_target_zone(k, UNIT_COSTS, model, st) == 0.0


def test_v1_constant_drift_frozen():
    k = GKernel.from_costs(UNIT_COSTS)
    model = DeterministicDrift(times=np.array([0.0, 1.0]),
                               values=np.array([-0.1, -0.1]), p0=1.0)
    st = TargetZoneState(t=0.0, m=1.0, p=1.0)
    assert v1_target_zone(k, UNIT_COSTS, model, st) == pytest.approx(
        -0.14822930513653838, rel=1e-6)


def test_v1_curve_refines_sparse_caller_grids():
    # a single-point grid must not degrade the quadrature mesh
    k = GKernel.from_costs(UNIT_COSTS)
    model = DeterministicDrift(times=np.array([0.0, 1.0]),
                               values=np.array([-0.1, -0.1]), p0=1.0)
    got = float(v1_curve_deterministic(model, k, UNIT_COSTS.lam, np.array([0.0]))[0])
    assert got == pytest.approx(-0.14822930513653838, rel=1e-6)


def test_capped_extra_frozen_at_barrier():
    # at-barrier extra selling rate at t = 0 for both cost regimes
    for costs, expected in ((SMALL_COSTS, 1.9945983830159818), (UNIT_COSTS, 0.97447035075482716)):
        k = GKernel.from_costs(costs)
        model = CappedBachelier(m0=1.0, sigma=SIGMA, p_bar=1.0)
        st = TargetZoneState(t=0.0, m=1.0, p=1.0)
        assert extra_rate(k, costs, model, st) == pytest.approx(expected, rel=1e-12)
        assert v1_target_zone(k, costs, model, st) == pytest.approx(-expected, rel=1e-12)


def test_panel_refinement_converged():
    # doubling the panel count again moves the quadrature by < 1e-10 rel
    k = GKernel.from_costs(UNIT_COSTS)
    model = CappedBachelier(m0=1.0, sigma=SIGMA, p_bar=1.0)
    for tau, money in ((1.0, 0.0), (0.5, 0.2), (0.05, 0.05)):
        st = TargetZoneState(t=1.0 - tau, m=1.0, p=1.0 - money)
        vals = [
            _capped_extra_nodes(model, st, k, UNIT_COSTS.lam, tau, *_panel_nodes(n))
            for n in (16, 32)
        ]
        assert vals[0] == pytest.approx(vals[1], rel=1e-10, abs=1e-18)


def test_far_from_barrier_extra_vanishes():
    k = GKernel.from_costs(UNIT_COSTS)
    model = CappedBachelier(m0=1.0, sigma=SIGMA, p_bar=1.0 + 10.0 * SIGMA)
    st = TargetZoneState(t=0.0, m=1.0, p=1.0)
    at_barrier = extra_rate(k, UNIT_COSTS, model, TargetZoneState(t=0.0, m=model.p_bar,
                                                            p=model.p_bar))
    assert extra_rate(k, UNIT_COSTS, model, st) < 1e-8 * at_barrier


def test_extra_rate_decreasing_in_moneyness():
    k = GKernel.from_costs(UNIT_COSTS)
    p_bar = 1.0
    bach = CappedBachelier(m0=1.0, sigma=SIGMA, p_bar=p_bar)
    bs = CappedBlackScholes(m0=1.0, sigma=SIGMA, p_bar=p_bar)
    # the geometric model needs a strictly positive level, so stop short of p_bar
    for model, ladder in ((bach, np.linspace(0.0, 1.0, 50)),
                          (bs, np.linspace(0.0, 0.9, 50))):
        rates = [
            extra_rate(k, UNIT_COSTS, model, TargetZoneState(t=0.0, m=p_bar - m, p=p_bar - m))
            for m in ladder
        ]
        assert all(a > b for a, b in zip(rates, rates[1:]))


def test_extra_rate_increasing_in_inverse_lambda():
    model = CappedBachelier(m0=1.0, sigma=SIGMA, p_bar=1.0)
    st = TargetZoneState(t=0.0, m=1.0, p=0.9)
    rates = []
    for lam in (0.4, 0.2, 0.1, 0.05):
        costs = CostParams(lam=lam, gamma=1.0, big_gamma=1.0, horizon=1.0, x0=1.0)
        rates.append(extra_rate(GKernel.from_costs(costs), costs, model, st))
    assert all(a < b for a, b in zip(rates, rates[1:]))


def test_bs_extra_rate_increasing_in_level():
    # fixed moneyness, growing uncapped level: more lookback value at stake
    costs = UNIT_COSTS
    k = GKernel.from_costs(costs)
    money = 0.1
    rates = []
    for m in (0.8, 1.0, 1.4, 2.0):
        model = CappedBlackScholes(m0=m, sigma=SIGMA, p_bar=m)
        st = TargetZoneState(t=0.0, m=m, p=m - money)
        rates.append(extra_rate(k, costs, model, st))
    assert all(a < b for a, b in zip(rates, rates[1:]))


def test_full_rate_is_ac_plus_extra():
    k = GKernel.from_costs(UNIT_COSTS)
    model = CappedBachelier(m0=1.0, sigma=SIGMA, p_bar=1.0)
    st = TargetZoneState(t=0.3, m=0.95, p=0.95)
    x = 0.4
    expected = urgency(k, st.t) * x + extra_rate(k, UNIT_COSTS, model, st)
    assert full_rate(k, UNIT_COSTS, model, st, x) == pytest.approx(expected, rel=1e-14)


def test_rate_surface_structure():
    k = GKernel.from_costs(UNIT_COSTS)
    model = CappedBachelier(m0=1.0, sigma=SIGMA, p_bar=1.0)
    taus = np.array([0.1, 0.5, 1.0])
    moneys = np.array([0.0, 0.2, 0.5, 1.0])
    surf = rate_surface(k, UNIT_COSTS, model, taus, moneys, x=1.0)
    assert surf.rate.shape == (taus.size, moneys.size)
    np.testing.assert_allclose(surf.rate, surf.rate_ac + surf.rate_extra, rtol=1e-14)
    np.testing.assert_allclose(
        surf.relative_increase, surf.rate_extra / surf.rate_ac, rtol=1e-14)
    # spot check one cell against the scalar path
    st = TargetZoneState(t=1.0 - taus[1], m=model.p_bar - moneys[2],
                         p=model.p_bar - moneys[2])
    assert surf.rate_extra[1, 2] == pytest.approx(
        extra_rate(k, UNIT_COSTS, model, st), rel=1e-12)


def test_state_validation():
    k = GKernel.from_costs(UNIT_COSTS)
    model = CappedBachelier(m0=1.0, sigma=SIGMA, p_bar=1.0)
    with pytest.raises(ValueError):
        v1_target_zone(k, UNIT_COSTS, model, TargetZoneState(t=0.0, m=0.5, p=0.9))
    with pytest.raises(ValueError):
        v1_target_zone(k, UNIT_COSTS, model, TargetZoneState(t=1.0, m=1.0, p=1.0))
    bs = CappedBlackScholes(m0=1.0, sigma=SIGMA, p_bar=1.0)
    with pytest.raises(ValueError):
        v1_target_zone(k, UNIT_COSTS, bs, TargetZoneState(t=0.0, m=-1.0, p=-1.0))
    with pytest.raises(ValueError):
        bs_f(0.5, 1.0, 1.5, SIGMA, 1.2)


def test_quadrature_error_is_exported():
    assert issubclass(QuadratureError, RuntimeError)
