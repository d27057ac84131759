"""Monte Carlo estimates of blow-up / convergence probabilities.

Each estimate runs one simulation per seed (seed0 + path index), so results
are reproducible and two estimates sharing a seed0 are driven by identical
noise, which makes monotone couplings exact.  Paths whose fate is still
undecided at the horizon are re-run on a doubled horizon (same Brownian
realisation, regenerated from the same stream) up to opts.max_doublings;
whatever remains undecided is reported, never folded into either outcome.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .calculus import phi
from .engine import _BLOW, _CONV, _fate_batch, _hit_band_diagonal, _hit_two_levels, \
    _window_start_index, SimOptions
from .paths import _generator, _TAG_INCREMENTS

__all__ = [
    "MCEstimate",
    "Theorem2Row",
    "estimate_B",
    "estimate_C",
    "estimate_p_plus",
    "estimate_rho",
    "estimate_chi",
    "theorem2_curve",
    "mean_band_exit_time",
]

_CHUNK_ELEMENT_BUDGET = 2e7


@dataclass(frozen=True)
class MCEstimate:
    p_hat: float
    n: int
    std_err: float
    n_undecided: int
    seed0: int

    @classmethod
    def from_counts(cls, hits: int, n: int, n_undecided: int, seed0: int) -> "MCEstimate":
        p = hits / n
        return cls(p_hat=p, n=n, std_err=math.sqrt(p * (1.0 - p) / n),
                   n_undecided=n_undecided, seed0=seed0)


@dataclass(frozen=True)
class Theorem2Row:
    s: float
    z: float
    x: float
    B_hat: MCEstimate
    phi_z: float


def _increments(seed: int, n_steps: int, scale: float) -> np.ndarray:
    """First n_steps increments of the same stream make_path(seed, ...) uses."""
    rng = _generator(seed, _TAG_INCREMENTS)
    return rng.standard_normal(n_steps) * scale


def _chunks(n: int, n_steps: int, threads: int) -> list[tuple[int, int]]:
    size = max(64, int(_CHUNK_ELEMENT_BUDGET / max(n_steps, 1)))
    size = min(size, max(1, math.ceil(n / max(threads, 1))))
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def _run_chunked(worker, n: int, n_steps: int, threads: int):
    spans = _chunks(n, n_steps, threads)
    if threads <= 1 or len(spans) == 1:
        return [worker(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: worker(*ab), spans))


def _classify_all(s: float, x: float, sigma: float, n_paths: int, opts: SimOptions,
                  seed0: int, threads: int = 1) -> np.ndarray:
    """Fate codes for n_paths independent paths, with horizon extension."""
    opts = opts.resolved(s)
    span = opts.t_end - s
    dt = opts.dt0
    scale = sigma * math.sqrt(dt)

    def simulate_codes(seeds: np.ndarray, t_end: float) -> np.ndarray:
        n_steps = int(round((t_end - s) / dt))
        win_idx = _window_start_index(s, dt, t_end, opts.window, n_steps)
        dh = np.empty((seeds.size, n_steps))
        for j, sd in enumerate(seeds):
            dh[j] = _increments(int(sd), n_steps, scale)
        codes, _, _, _ = _fate_batch(np.full(seeds.size, float(x)), s, dt, dh,
                                     opts.x_cap, win_idx, opts.band_delta)
        return codes

    seeds_all = seed0 + np.arange(n_paths)
    n_steps0 = int(round(span / dt))

    def worker(a: int, b: int) -> np.ndarray:
        return simulate_codes(seeds_all[a:b], opts.t_end)

    codes = np.concatenate(_run_chunked(worker, n_paths, n_steps0, threads))
    for k in range(1, opts.max_doublings + 1):
        undec = np.flatnonzero(codes == 0)
        if undec.size == 0:
            break
        codes[undec] = simulate_codes(seeds_all[undec], s + span * 2**k)
    return codes


def estimate_B(s: float, x: float, sigma: float, n_paths: int, opts: SimOptions,
               seed0: int, threads: int = 1) -> MCEstimate:
    """Fraction of paths from (s, x) that blow up."""
    if n_paths < 100:
        raise ValueError(f"need at least 100 paths, got {n_paths}")
    codes = _classify_all(s, x, sigma, n_paths, opts, seed0, threads)
    return MCEstimate.from_counts(int(np.sum(codes == _BLOW)), n_paths,
                                  int(np.sum(codes == 0)), seed0)


def estimate_C(s: float, x: float, sigma: float, n_paths: int, opts: SimOptions,
               seed0: int, threads: int = 1) -> MCEstimate:
    """Fraction of paths from (s, x) that converge to zero."""
    if n_paths < 100:
        raise ValueError(f"need at least 100 paths, got {n_paths}")
    codes = _classify_all(s, x, sigma, n_paths, opts, seed0, threads)
    return MCEstimate.from_counts(int(np.sum(codes == _CONV)), n_paths,
                                  int(np.sum(codes == 0)), seed0)


@njit(cache=True, nogil=True)
def _band_sides(x0, t0, dt, dh, halfwidth, x_cap):
    n = dh.shape[0]
    sides = np.zeros(n, dtype=np.int8)
    times = np.empty(n)
    for i in range(n):
        sides[i], times[i] = _hit_band_diagonal(x0, t0, dt, dh[i], halfwidth, x_cap)
    return sides, times


@njit(cache=True, nogil=True)
def _two_level_sides(x0, t0, dt, dh, lo, hi, x_cap):
    n = dh.shape[0]
    sides = np.zeros(n, dtype=np.int8)
    times = np.empty(n)
    for i in range(n):
        sides[i], times[i] = _hit_two_levels(x0, t0, dt, dh[i], lo, hi, x_cap)
    return sides, times


def _hit_all(kernel_args_builder, s: float, sigma: float, n_paths: int,
             opts: SimOptions, seed0: int, threads: int) -> tuple[np.ndarray, np.ndarray]:
    """Shared driver for first-hit style estimates, with horizon extension."""
    opts = opts.resolved(s)
    span = opts.t_end - s
    dt = opts.dt0
    scale = sigma * math.sqrt(dt)
    seeds_all = seed0 + np.arange(n_paths)

    def run(seeds: np.ndarray, t_end: float):
        n_steps = int(round((t_end - s) / dt))
        dh = np.empty((seeds.size, n_steps))
        for j, sd in enumerate(seeds):
            dh[j] = _increments(int(sd), n_steps, scale)
        return kernel_args_builder(dh)

    n_steps0 = int(round(span / dt))

    def worker(a: int, b: int):
        return run(seeds_all[a:b], opts.t_end)

    parts = _run_chunked(worker, n_paths, n_steps0, threads)
    sides = np.concatenate([p[0] for p in parts])
    times = np.concatenate([p[1] for p in parts])
    for k in range(1, opts.max_doublings + 1):
        undec = np.flatnonzero(sides == 0)
        if undec.size == 0:
            break
        sides[undec], times[undec] = run(seeds_all[undec], s + span * 2**k)
    return sides, times


def estimate_p_plus(s: float, x_offset: float, sigma: float, n_paths: int,
                    opts: SimOptions, seed0: int, threads: int = 1) -> MCEstimate:
    """Probability that X - t exits [-1, 1] via +1, started at (s, s + x_offset)."""
    if abs(x_offset) > 1:
        raise ValueError(f"|x_offset| must be <= 1, got {x_offset}")
    opts = opts.resolved(s)
    builder = lambda dh: _band_sides(s + x_offset, s, opts.dt0, dh, 1.0, opts.x_cap)
    sides, _ = _hit_all(builder, s, sigma, n_paths, opts, seed0, threads)
    return MCEstimate.from_counts(int(np.sum(sides == 1)), n_paths,
                                  int(np.sum(sides == 0)), seed0)


def estimate_rho(s: float, x: float, sigma: float, n_paths: int,
                 opts: SimOptions, seed0: int, threads: int = 1) -> MCEstimate:
    """Probability of hitting level 0 before level s from (s, x), 0 < x < s."""
    if not 0 < x < s:
        raise ValueError(f"need 0 < x < s, got x={x}, s={s}")
    opts = opts.resolved(s)
    builder = lambda dh: _two_level_sides(x, s, opts.dt0, dh, 0.0, s, opts.x_cap)
    sides, _ = _hit_all(builder, s, sigma, n_paths, opts, seed0, threads)
    return MCEstimate.from_counts(int(np.sum(sides == -1)), n_paths,
                                  int(np.sum(sides == 0)), seed0)


def estimate_chi(s: float, sigma: float, n_paths: int, opts: SimOptions,
                 seed0: int, threads: int = 1) -> MCEstimate:
    """Probability of staying in [-1, 1] up to t_end and ending near zero.

    The event is defined at the fixed horizon opts.t_end, so no horizon
    extension applies and the undecided count is structurally zero.
    """
    opts = opts.resolved(s)
    dt = opts.dt0
    n_steps = int(round((opts.t_end - s) / dt))
    win_idx = _window_start_index(s, dt, opts.t_end, opts.window, n_steps)
    scale = sigma * math.sqrt(dt)
    seeds_all = seed0 + np.arange(n_paths)

    def worker(a: int, b: int) -> np.ndarray:
        dh = np.empty((b - a, n_steps))
        for j, sd in enumerate(seeds_all[a:b]):
            dh[j] = _increments(int(sd), n_steps, scale)
        _, _, x_finals, stayed = _fate_batch(np.zeros(b - a), s, dt, dh,
                                             opts.x_cap, win_idx, opts.band_delta)
        return stayed & (np.abs(x_finals) <= opts.band_delta)

    flags = np.concatenate(_run_chunked(worker, n_paths, n_steps, threads))
    return MCEstimate.from_counts(int(np.sum(flags)), n_paths, 0, seed0)


def theorem2_curve(s: float, zs, sigma: float, n_paths: int, opts: SimOptions,
                   seed0: int, threads: int = 1) -> list[Theorem2Row]:
    """Blow-up probability along x = s + z sigma / sqrt(2s), one row per z.

    Rows use disjoint seed ranges so their standard errors are independent.
    """
    rows = []
    for i, z in enumerate(zs):
        x = s + z * sigma / math.sqrt(2.0 * s)
        est = estimate_B(s, x, sigma, n_paths, opts, seed0 + i * n_paths, threads)
        rows.append(Theorem2Row(s=s, z=float(z), x=x, B_hat=est, phi_z=phi(float(z))))
    return rows


def mean_band_exit_time(s: float, sigma: float, n_paths: int, opts: SimOptions,
                        seed0: int, threads: int = 1,
                        halfwidth: float = 1.0) -> tuple[float, int]:
    """Mean of (exit time - s) for the moving band [t - 1, t + 1] from (s, s).

    Paths that never exit before t_end contribute the full horizon, which
    biases the mean upward (conservative for upper-bound checks); their count
    is returned alongside.
    """
    opts = opts.resolved(s)
    builder = lambda dh: _band_sides(s, s, opts.dt0, dh, halfwidth, opts.x_cap)
    sides, times = _hit_all(builder, s, sigma, n_paths, opts, seed0, threads)
    return float(np.mean(times - s)), int(np.sum(sides == 0))
