import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import erf

from riversim.closed_form import (BLOWN_UP, NEVER, Regime,
                                  blowup_time_deterministic,
                                  classify_deterministic, critical_initial,
                                  river_series, solve_deterministic)

# bisection on the explicit solution's denominator with the scipy erf,
# frozen from two independent oracles (root finding and adaptive ODE escape)
T_STAR_FROM_ONE = 1.2755477364172156


def reference_solution(x0, t_hi, ts):
    sol = solve_ivp(lambda t, y: y * (y - t), (0.0, t_hi), [x0], t_eval=ts,
                    rtol=1e-12, atol=1e-14, method="DOP853")
    return sol.y[0]


def test_critical_value():
    assert critical_initial() == pytest.approx(0.7978845608028654, abs=0)
    assert critical_initial() ** 2 * math.pi / 2 == pytest.approx(1.0, abs=5e-16)
    assert classify_deterministic(critical_initial()) is Regime.CRITICAL


def test_classification_flips_at_tiny_probes():
    xc = critical_initial()
    assert classify_deterministic(xc - 1e-12) is Regime.CONVERGES_TO_ZERO
    assert classify_deterministic(xc + 1e-12) is Regime.BLOWS_UP
    assert classify_deterministic(0.7) is Regime.CONVERGES_TO_ZERO
    assert classify_deterministic(0.8) is Regime.BLOWS_UP


def test_zero_is_a_fixed_point():
    assert solve_deterministic(0.0, 5.0) == 0.0


def test_critical_solution_matches_three_term_series_at_10():
    val = solve_deterministic(critical_initial(), 10.0)
    assert val == pytest.approx(10.098, abs=2e-4)
    assert abs(val - river_series(10.0, 3)) < 1e-4


def test_solution_matches_ode_oracle():
    ts = np.linspace(0.0, 1.0, 9)[1:]
    ref = reference_solution(1.0, 1.0, ts)
    for t, r in zip(ts, ref):
        assert solve_deterministic(1.0, float(t)) == pytest.approx(r, rel=1e-8)


def test_blowup_marker_past_blowup_time():
    assert solve_deterministic(1.0, 2.0) == BLOWN_UP
    assert solve_deterministic(1.0, T_STAR_FROM_ONE + 1e-9) == BLOWN_UP


def test_blowup_time_against_bisection_oracle():
    oracle = brentq(lambda t: 2.0 - math.sqrt(2 * math.pi) * erf(t / math.sqrt(2)),
                    0.1, 5.0, xtol=1e-14)
    assert oracle == pytest.approx(T_STAR_FROM_ONE, abs=1e-12)
    assert blowup_time_deterministic(1.0) == pytest.approx(oracle, abs=1e-3)
    assert blowup_time_deterministic(1.0) == pytest.approx(oracle, abs=1e-10)


def test_blowup_time_below_critical_is_never():
    assert blowup_time_deterministic(0.5) == NEVER
    assert blowup_time_deterministic(critical_initial()) == NEVER


def test_blowup_time_monotone_in_start():
    assert blowup_time_deterministic(10.0) < blowup_time_deterministic(2.0)


def test_river_series_orders():
    assert river_series(3.0, 1) == 3.0
    assert river_series(10.0, 3) == pytest.approx(10.098, abs=1e-12)
    with pytest.raises(ValueError):
        river_series(-1.0, 2)
    with pytest.raises(ValueError):
        river_series(1.0, 4)


def test_critical_vs_series_at_20():
    gap = abs(solve_deterministic(critical_initial(), 20.0) - river_series(20.0, 3))
    assert gap <= 1e-5


def test_series_remainder_sign_and_size():
    # critical solution sits above series3 with t^5-scaled remainder <= 10
    for t in (5.0, 8.0, 12.0, 20.0, 40.0):
        xc_t = solve_deterministic(critical_initial(), t)
        assert river_series(t, 2) > xc_t > river_series(t, 3)
        assert (xc_t - river_series(t, 3)) * t**5 <= 10.0


def test_flow_property():
    x0, s, t = 0.6, 1.0, 1.5
    mid = solve_deterministic(x0, s)
    sol = solve_ivp(lambda u, y: y * (y - (u + s)), (0.0, t), [mid],
                    rtol=1e-12, atol=1e-14, method="DOP853")
    assert solve_deterministic(x0, s + t) == pytest.approx(sol.y[0, -1], rel=1e-8)


def test_monotone_in_initial_value():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b = sorted(rng.uniform(-2.0, 1.2, size=2))
        if a == b:
            continue
        t_lim = min(blowup_time_deterministic(a), blowup_time_deterministic(b))
        t = 0.9 * min(t_lim, 4.0)
        assert solve_deterministic(a, t) < solve_deterministic(b, t)


def test_near_critical_large_t_is_graceful():
    xc = critical_initial()
    for d in (1e-9, -1e-9, 1e-8, -1e-8):
        val = solve_deterministic(xc + d, 30.0)
        assert not math.isnan(val)
        if d < 0:
            assert 0.0 <= val < 1e-3   # converging branch already tiny
    # exactly-critical branch never overflows, even far out
    assert solve_deterministic(xc, 200.0) == pytest.approx(200.0 + 1 / 200.0, rel=1e-4)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        solve_deterministic(1.0, -0.5)
