import io

import numpy as np
import pytest
from scipy import stats

from riversim.paths import (Grid, BrownianPath, dump_path, extend_path,
                            increment, load_path, make_path, refine)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(0.0, 1.0, -0.1)
    with pytest.raises(ValueError):
        Grid(1.0, 1.0, 0.1)
    g = Grid(0.0, 1.0, 0.25)
    assert g.n_nodes == 5
    assert np.allclose(g.times(), [0, 0.25, 0.5, 0.75, 1.0])


def test_starts_at_zero_and_regenerates_bit_identical():
    g = Grid(0.0, 1.0, 0.5)
    p = make_path(42, g)
    assert p.values[0] == 0.0
    q = make_path(42, g)
    assert np.array_equal(p.values, q.values)


def test_distinct_seeds_differ():
    g = Grid(0.0, 1.0, 0.01)
    assert not np.array_equal(make_path(1, g).values, make_path(2, g).values)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        make_path(-1, Grid(0.0, 1.0, 0.5))


def test_w1_sample_variance():
    n = 100_000
    g = Grid(0.0, 1.0, 1.0)
    w1 = np.array([make_path(seed, g).values[-1] for seed in range(n)])
    assert abs(w1.var(ddof=1) - 1.0) < 0.02


def test_w1_normality_ks():
    g = Grid(0.0, 1.0, 1.0)
    w1 = np.array([make_path(seed, g).values[-1] for seed in range(10_000)])
    assert stats.kstest(w1, "norm").pvalue > 0.01


def test_refine_preserves_nodes_all_factors():
    p = make_path(7, Grid(0.0, 2.0, 0.25))
    for factor in (2, 3, 4):
        r = refine(p, factor)
        assert r.dt == pytest.approx(p.dt / factor)
        assert np.array_equal(r.values[::factor], p.values)


def test_refine_is_deterministic():
    p = make_path(11, Grid(0.0, 1.0, 0.5))
    assert np.array_equal(refine(p, 2).values, refine(p, 2).values)


def test_refine_rejects_small_factor():
    p = make_path(11, Grid(0.0, 1.0, 0.5))
    with pytest.raises(ValueError):
        refine(p, 1)


def test_bridge_midpoint_mean_and_variance():
    # one-cell paths: midpoint deviation from (W(a)+W(b))/2 is N(0, dt/4)
    n = 100_000
    g = Grid(0.0, 1.0, 1.0)
    dev = np.empty(n)
    for seed in range(n):
        p = make_path(seed, g)
        mid = refine(p, 2).values[1]
        dev[seed] = mid - 0.5 * (p.values[0] + p.values[1])
    target = g.dt / 4.0
    se_var = target * np.sqrt(2.0 / (n - 1))
    assert abs(dev.mean()) < 3 * np.sqrt(target / n)
    assert abs(dev.var(ddof=1) - target) < 3 * se_var


def test_increment_endpoints_and_additivity():
    p = make_path(5, Grid(0.0, 2.0, 0.5))
    assert increment(p, 0.0, 0.0) == 0.0
    assert increment(p, 0.0, 2.0) == p.values[-1]
    assert increment(p, 0.0, 1.5) == increment(p, 0.0, 0.5) + increment(p, 0.5, 1.5)
    with pytest.raises(ValueError):
        increment(p, 0.0, 0.3)
    with pytest.raises(ValueError):
        increment(p, 1.0, 0.5)


def test_dump_load_roundtrip():
    p = make_path(123, Grid(1.0, 3.0, 0.25))
    buf = io.BytesIO()
    dump_path(p, buf)
    buf.seek(0)
    q = load_path(buf)
    assert q.seed == p.seed
    assert (q.t0, q.t1, q.dt) == (p.t0, p.t1, p.dt)
    assert np.array_equal(q.values, p.values)


def test_extend_path_shares_prefix():
    p = make_path(9, Grid(0.0, 1.0, 0.125))
    q = extend_path(p, 2.0)
    assert q.t1 == pytest.approx(2.0)
    assert np.array_equal(q.values[:p.values.size], p.values)


def test_extend_refined_path_rejected():
    p = refine(make_path(9, Grid(0.0, 1.0, 0.5)), 2)
    with pytest.raises(ValueError):
        extend_path(p, 2.0)


def test_values_are_read_only():
    p = make_path(3, Grid(0.0, 1.0, 0.5))
    with pytest.raises(ValueError):
        p.values[0] = 1.0
