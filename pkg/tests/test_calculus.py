import math

import numpy as np
import pytest

from riversim.calculus import (Boundary, Drift, ScaleFunction, affine_exit_prob,
                               exit_prob, expected_exit_time, feller_classify,
                               phi, scale)

ZERO = Drift(lambda u: 0.0 * u, "zero")
OU = Drift(lambda u: -u, "ou")
USQ = Drift(lambda u: u * u, "u^2")
PITCH = Drift(lambda u: u * (u - 10.0), "u(u-10)")

# frozen from an arbitrary-precision quadrature oracle (mpmath, 30 digits)
SCALE_INF_USQ = 1.0222063652016374        # (3/2)^(1/3) * Gamma(4/3)
EXIT_VIA_10_FROM_9 = 1.65717676080116e-05
EXIT_TIME_FROM_9 = 0.6647817349932881
HIT_ZERO_TIME_SUP = 2.0898117061174864    # x -> -inf limit for drift u^2
HIT_ZERO_TIME_FROM_M50 = 2.0698117477186613


def test_zero_drift_scale_is_identity():
    for x in (-2.0, -0.5, 0.0, 1.0, 3.0):
        assert scale(ZERO, 1.0, 0.0, x) == pytest.approx(x, abs=1e-10)


def test_scale_at_infinity_for_quadratic_drift():
    assert scale(USQ, 1.0, 0.0, math.inf) == pytest.approx(SCALE_INF_USQ, abs=1e-8)


def test_scale_diverges_on_the_repelled_side():
    assert scale(USQ, 1.0, 0.0, -math.inf) == -math.inf


def test_scale_finite_at_infinity_for_shifted_drift():
    s = 25.0
    val = scale(Drift(lambda u: u * (u + s) - 1.0, "shifted"), 1.0, 0.0, math.inf)
    assert math.isfinite(val) and val > 0


def test_exit_prob_symmetric_cases():
    assert exit_prob(ZERO, 1.0, -1.0, 1.0, 0.0) == pytest.approx(0.5, abs=1e-12)
    aff = Drift(lambda u: 10.0 * u, "affine")
    assert exit_prob(aff, 1.0, -1.0, 1.0, 0.0) == pytest.approx(0.5, abs=1e-12)


def test_exit_prob_interval_validation():
    with pytest.raises(ValueError):
        exit_prob(ZERO, 1.0, -1.0, 1.0, 2.0)


def test_exit_prob_matches_high_precision_oracle():
    p = exit_prob(PITCH, 1.0, 0.0, 10.0, 9.0)
    assert p == pytest.approx(EXIT_VIA_10_FROM_9, rel=1e-6)


def test_exit_prob_anchor_invariance():
    aff = Drift(lambda u: 3.0 * u + 1.0, "affine")
    a = exit_prob(aff, 1.0, -1.0, 1.0, 0.2, anchor=0.0)
    b = exit_prob(aff, 1.0, -1.0, 1.0, 0.2, anchor=0.7)
    assert a == pytest.approx(b, abs=1e-12)


def test_scale_strictly_increasing():
    rng = np.random.default_rng(3)
    for drift in (OU, PITCH):
        sf = ScaleFunction(drift, 1.0, anchor=0.0)
        xs = np.sort(rng.uniform(-3.0, 3.0, size=1000))
        vals = np.cumsum([sf.p_diff(a, b) for a, b in zip(xs[:-1], xs[1:])])
        assert np.all(np.diff(vals) > 0)


def test_expected_exit_time_classical_square():
    assert expected_exit_time(ZERO, 1.0, -1.0, 1.0, 0.0) == pytest.approx(1.0, abs=1e-8)
    assert expected_exit_time(ZERO, 2.0, -1.0, 1.0, 0.5) == pytest.approx(
        (1 - 0.5) * (0.5 + 1) / 4.0, abs=1e-8)


def test_expected_exit_time_boundary_starts():
    assert expected_exit_time(ZERO, 1.0, -1.0, 1.0, 1.0) == 0.0
    assert expected_exit_time(ZERO, 1.0, -1.0, 1.0, -1.0) == 0.0


def test_expected_exit_time_matches_oracle_for_pitchfork():
    val = expected_exit_time(PITCH, 1.0, 0.0, 10.0, 9.0)
    assert val == pytest.approx(EXIT_TIME_FROM_9, rel=1e-6)


def test_one_sided_hitting_time_limit_is_finite():
    sup = expected_exit_time(USQ, 1.0, -math.inf, 0.0, -math.inf)
    assert sup == pytest.approx(HIT_ZERO_TIME_SUP, rel=1e-6)
    from_m50 = expected_exit_time(USQ, 1.0, -math.inf, 0.0, -50.0)
    assert from_m50 == pytest.approx(HIT_ZERO_TIME_FROM_M50, rel=1e-6)
    assert from_m50 < sup


def test_one_sided_hitting_time_matches_mc():
    # independent Euler oracle for dX = X^2 dt + dW started deep below zero
    rng = np.random.Generator(np.random.Philox(key=2024))
    n, dt = 400, 2e-5
    x = np.full(n, -50.0)
    alive = np.ones(n, dtype=bool)
    t_hit = np.zeros(n)
    sq = math.sqrt(dt)
    for k in range(int(12.0 / dt)):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        xi = x[idx] + x[idx] ** 2 * dt + sq * rng.standard_normal(idx.size)
        x[idx] = xi
        done = xi >= 0.0
        t_hit[idx[done]] = (k + 1) * dt
        alive[idx[done]] = False
    assert not alive.any()
    se = t_hit.std(ddof=1) / math.sqrt(n)
    assert abs(t_hit.mean() - HIT_ZERO_TIME_FROM_M50) <= 3 * se + 0.01


def test_feller_classifications():
    s = 10.0
    assert feller_classify(Drift(lambda u: u * (u + s) - 1.0, "shifted"), 1.0).kind \
        is Boundary.EXPLODES_TO_PLUS_INFINITY
    assert feller_classify(ZERO, 1.0).kind is Boundary.NO_EXPLOSION
    ou = feller_classify(OU, 1.0)
    assert ou.kind is Boundary.NO_EXPLOSION
    assert math.isinf(ou.v_left) and math.isinf(ou.v_right)
    cubic = feller_classify(Drift(lambda u: u**3, "cubic"), 1.0)
    assert cubic.kind is Boundary.BOTH_POSSIBLE


def test_phi_values_and_symmetry():
    assert phi(0.0) == 0.5
    assert phi(1.0) == pytest.approx(0.8413447460685429, abs=1e-15)
    rng = np.random.default_rng(1)
    for z in rng.normal(size=50) * 3:
        assert phi(z) + phi(-z) == pytest.approx(1.0, abs=1e-15)


def test_affine_exit_prob_symmetry_and_limit():
    assert affine_exit_prob(25.0, 0.0, 1.0, 0.0) == pytest.approx(0.5, abs=1e-15)
    z = 1.0
    val = affine_exit_prob(25.0, 0.0, 1.0, z / math.sqrt(50.0))
    assert val == pytest.approx(phi(z), abs=1e-3)


def test_affine_exit_prob_agrees_with_quadrature():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        s = rng.uniform(2.0, 30.0)
        A = rng.uniform(-3.0, 3.0)
        x = rng.uniform(-0.95, 0.95)
        closed = affine_exit_prob(s, A, 1.0, x)
        quadr = exit_prob(Drift(lambda u: s * u + A, "aff"), 1.0, -1.0, 1.0, x)
        worst = max(worst, abs(closed - quadr))
    assert worst < 1e-9


def test_affine_exit_prob_domain():
    with pytest.raises(ValueError):
        affine_exit_prob(25.0, 0.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        affine_exit_prob(-1.0, 0.0, 1.0, 0.0)


def test_blowup_shifted_drift_tail_bound():
    # log(1 - Q(s^-alpha, s)) <= -(1 - eps) * s^(1-2 alpha) for the frozen-s drift
    eps = 0.2
    for s in (25.0, 50.0, 100.0):
        drift = Drift(lambda u, s=s: u * (u + s) - 1.0, "shifted")
        sf = ScaleFunction(drift, 1.0, anchor=0.0)
        cut = sf.tail_cut(+1)
        for alpha in (0.0, 0.25):
            gamma = s**-alpha
            below = sf.p_diff(0.0, gamma)
            above = sf.p_diff(gamma, cut)
            log_1mq = math.log(above) - math.log(below + above)
            assert log_1mq <= -(1.0 - eps) * s**(1.0 - 2.0 * alpha)


def test_drift_spot_check():
    assert Drift(lambda u: u * u, "sq").spot_check(-2.0, 2.0) > 0
    with pytest.raises(ValueError):
        Drift(lambda u: float("nan"), "bad").spot_check(0.0, 1.0)
