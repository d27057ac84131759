"""Pathwise localisation of the borderline start separating blow-up from decay.

For one Brownian realisation the map x -> fate is monotone, so the borderline
initial value at time s is bracketed by bisection: the lower bracket end
converges to zero, the upper end blows up, both driven by the same
increments.  The borderline can sit at -infinity (every probe blows up); a
probe ``lo_floor`` below s that still blows up is classified that way.
Horizon extension on undecided probes re-generates the same realisation on a
longer grid.

The asymptotic expansion around the diagonal is computed by backward
recurrences in ratio form: every kernel exp((t^2 - u^2)/2) is carried as a
per-cell factor exp((t_j^2 - t_{j+1}^2)/2) <= 1, so nothing overflows at
large t and each order costs O(grid).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx
from scipy.stats import kendalltau

from .engine import FateKind, SimOptions, _euler_record, _fate_shared, \
    _window_start_index
from .linear import TruncationPolicy
from .paths import BrownianPath, extend_path

__all__ = [
    "RiverStatus",
    "RiverEstimate",
    "ExpansionState",
    "ExpansionError",
    "DiagnosticReport",
    "OscillationEvents",
    "locate_river",
    "track_river",
    "theorem4_diagnostic",
    "oscillation_events",
    "expand_river",
    "expansion_error",
    "expansion_policy",
]


class RiverStatus(enum.Enum):
    LOCATED = "located"
    MINUS_INFINITY = "minus_infinity"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class RiverEstimate:
    s: float
    lo: float
    hi: float
    horizon: float
    status: RiverStatus

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


class _Prober:
    """Fate probes on one path with lazy horizon extension."""

    def __init__(self, path: BrownianPath, s: float, sigma: float, opts: SimOptions):
        self.s = s
        self.sigma = sigma
        self.opts = opts.resolved(s)
        self.span = self.opts.t_end - s
        self.path = path
        self._dh: dict[int, np.ndarray] = {}

    def _increments(self, level: int) -> np.ndarray:
        if level not in self._dh:
            t_end = self.s + self.span * 2**level
            if t_end > self.path.t1 + 1e-9:
                self.path = extend_path(self.path, t_end)
            i0 = self.path.grid.index_of(self.s)
            i1 = self.path.grid.index_of(min(t_end, self.path.t1))
            self._dh[level] = np.diff(self.sigma * self.path.values[i0:i1 + 1])
        return self._dh[level]

    def fate(self, x: float) -> FateKind:
        for level in range(self.opts.max_doublings + 1):
            dh = self._increments(level)
            t_end = self.s + dh.size * self.path.dt
            win = _window_start_index(self.s, self.path.dt, t_end,
                                      self.opts.window, dh.size)
            code = _fate_shared(np.array([x]), self.s, self.path.dt, dh,
                                self.opts.x_cap, win, self.opts.band_delta)[0]
            if code == 1:
                return FateKind.BLOW_UP
            if code == 2:
                return FateKind.CONVERGE_ZERO
        return FateKind.UNDECIDED

    @property
    def horizon_used(self) -> float:
        return self.s + self.span * 2**max(self._dh.keys(), default=0)


def locate_river(path: BrownianPath, s: float, sigma: float, tol: float,
                 opts: SimOptions, lo_floor: float = 50.0,
                 hi_ceiling: float = 80.0) -> RiverEstimate:
    """Bracket the borderline start at time s to width tol on one path."""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    prober = _Prober(path, s, sigma, opts)

    def unresolved(lo: float, hi: float) -> RiverEstimate:
        return RiverEstimate(s=s, lo=lo, hi=hi, horizon=prober.horizon_used,
                             status=RiverStatus.UNRESOLVED)

    hi = s + 5.0
    while True:
        f = prober.fate(hi)
        if f is FateKind.BLOW_UP:
            break
        if f is FateKind.UNDECIDED or hi >= s + hi_ceiling:
            return unresolved(s - 5.0, hi)
        hi = s + (hi - s) * 2.0

    lo = s - 5.0
    while True:
        f = prober.fate(lo)
        if f is FateKind.CONVERGE_ZERO:
            break
        if f is FateKind.UNDECIDED:
            return unresolved(lo, hi)
        if lo <= s - lo_floor:
            return RiverEstimate(s=s, lo=-math.inf, hi=lo,
                                 horizon=prober.horizon_used,
                                 status=RiverStatus.MINUS_INFINITY)
        lo = s - min(2.0 * (s - lo), lo_floor)

    return _bisect(prober, s, lo, hi, tol)


def _bisect(prober: _Prober, s: float, lo: float, hi: float, tol: float) -> RiverEstimate:
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f = prober.fate(mid)
        if f is FateKind.BLOW_UP:
            hi = mid
        elif f is FateKind.CONVERGE_ZERO:
            lo = mid
        else:
            return RiverEstimate(s=s, lo=lo, hi=hi, horizon=prober.horizon_used,
                                 status=RiverStatus.UNRESOLVED)
    return RiverEstimate(s=s, lo=lo, hi=hi, horizon=prober.horizon_used,
                         status=RiverStatus.LOCATED)


def _propagate_value(path: BrownianPath, s_from: float, x: float, sigma: float,
                     t_to: float, x_cap: float) -> float | None:
    """Forward value at t_to of the coupled flow, None if it capped earlier."""
    i0 = path.grid.index_of(s_from)
    i1 = path.grid.index_of(t_to)
    dh = np.diff(sigma * path.values[i0:i1 + 1])
    values, stop, capped = _euler_record(x, s_from, path.dt, dh, x_cap)
    if capped:
        return None
    return float(values[stop])


def track_river(path: BrownianPath, s_grid, sigma: float, tol: float,
                opts: SimOptions, lo_floor: float = 50.0) -> list[RiverEstimate]:
    """Locate at the first grid time, then propagate-and-retighten forward.

    The bracket ends are pushed forward with the same increments the probes
    use, so their fates carry over exactly; a fresh localisation is run
    whenever a propagated end caps out or its fate no longer matches.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.size == 0 or np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be non-empty and strictly increasing")
    out = [locate_river(path, float(s_grid[0]), sigma, tol, opts, lo_floor=lo_floor)]
    for s_k in map(float, s_grid[1:]):
        prev = out[-1]
        est = None
        if prev.status is RiverStatus.LOCATED:
            lo_k = _propagate_value(path, prev.s, prev.lo, sigma, s_k, opts.x_cap)
            hi_k = _propagate_value(path, prev.s, prev.hi, sigma, s_k, opts.x_cap)
            if lo_k is not None and hi_k is not None and lo_k < hi_k:
                prober = _Prober(path, s_k, sigma, opts)
                if (prober.fate(lo_k) is FateKind.CONVERGE_ZERO
                        and prober.fate(hi_k) is FateKind.BLOW_UP):
                    est = _bisect(prober, s_k, lo_k, hi_k, tol)
        if est is None or est.status is RiverStatus.UNRESOLVED:
            est = locate_river(path, s_k, sigma, tol, opts, lo_floor=lo_floor)
        out.append(est)
    return out


@dataclass(frozen=True)
class DiagnosticReport:
    alpha: float
    s: np.ndarray
    scaled_deviation: np.ndarray
    tail_kendall_tau: float
    tail_max: float
    tail_median: float


def theorem4_diagnostic(series: list[RiverEstimate], alpha: float) -> DiagnosticReport:
    """s^alpha |R(s) - s| along a located series, with a tail trend statistic."""
    if not 0 <= alpha < 0.5:
        raise ValueError(f"alpha must lie in [0, 1/2), got {alpha}")
    if any(e.status is not RiverStatus.LOCATED for e in series):
        raise ValueError("diagnostic requires every estimate to be located")
    s = np.array([e.s for e in series])
    scaled = s**alpha * np.abs(np.array([e.mid for e in series]) - s)
    tail = scaled[scaled.size // 2:]
    s_tail = s[s.size // 2:]
    if tail.size >= 2:
        tau = float(kendalltau(s_tail, tail).statistic)
    else:
        tau = math.nan
    return DiagnosticReport(alpha=alpha, s=s, scaled_deviation=scaled,
                            tail_kendall_tau=tau, tail_max=float(np.max(tail)),
                            tail_median=float(np.median(tail)))


@dataclass(frozen=True)
class OscillationEvents:
    above: np.ndarray
    below: np.ndarray


def oscillation_events(series: list[RiverEstimate], c: float = 0.0) -> OscillationEvents:
    """Times where R(s) - s exceeds +c/sqrt(s) and where it drops below -c/sqrt(s)."""
    if c < 0:
        raise ValueError(f"c must be non-negative, got {c}")
    s = np.array([e.s for e in series])
    dev = np.array([e.mid for e in series]) - s
    thresh = c / np.sqrt(s)
    return OscillationEvents(above=s[dev > thresh], below=s[dev < -thresh])


# ------------------------------------------------------------- expansion --

def expansion_policy(t_max: float, tail_tol: float = 1e-10) -> TruncationPolicy:
    """Horizon T with exp((t_max^2 - T^2)/2)/T <= tail_tol (small safety margin)."""
    T = math.sqrt(t_max**2 + 2.0 * math.log(1.0 / tail_tol))
    for _ in range(3):
        T = math.sqrt(t_max**2 + 2.0 * (math.log(1.0 / tail_tol) - math.log(T)))
    return TruncationPolicy(horizon=T + 0.05, tail_tol=tail_tol)


@dataclass(frozen=True)
class ExpansionState:
    n: int
    t_grid: np.ndarray
    z: dict[int, np.ndarray]
    trunc: TruncationPolicy

    def river(self, order: int) -> np.ndarray:
        """Approximation of order ``order``: t + Z_order(t) on the grid."""
        return self.t_grid + self.z[order]


def _mills(u: np.ndarray) -> np.ndarray:
    """exp(u^2/2) * int_u^inf exp(-v^2/2) dv, overflow-free."""
    return math.sqrt(math.pi / 2.0) * erfcx(u / math.sqrt(2.0))


def expand_river(path: BrownianPath | None, n: int, t_grid, sigma: float,
                 trunc: TruncationPolicy, dt: float | None = None) -> ExpansionState:
    """Recursive diagonal expansion up to order n on the given times.

    The first order combines the exact Gaussian tail kernel with a left-point
    tail sum of the path increments; higher orders iterate the quadratic
    correction integral by an O(grid) backward recurrence.  All kernels are
    evaluated in ratio form, so the result is finite at any t.
    """
    if n < 0:
        raise ValueError(f"order must be >= 0, got {n}")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    t_max = float(t_grid[-1])
    if math.exp(min(700.0, (t_max**2 - trunc.horizon**2) / 2.0)) / trunc.horizon > trunc.tail_tol:
        raise ValueError("truncation horizon too short for the requested times")
    if sigma > 0:
        if path is None:
            raise ValueError("a Brownian path is required when sigma > 0")
        if path.t1 + 1e-9 < trunc.horizon:
            raise ValueError("path horizon shorter than the truncation horizon")
        i0 = path.grid.index_of(float(t_grid[0]))
        i1 = min(path.grid.n_nodes - 1,
                 i0 + int(math.ceil((trunc.horizon - t_grid[0]) / path.dt - 1e-9)))
        u = path.grid.times()[i0:i1 + 1]
        dw = np.diff(path.values[i0:i1 + 1])
        step = path.dt
    else:
        if dt is None:
            dt = path.dt if path is not None else 1e-3
        m = int(math.ceil((trunc.horizon - t_grid[0]) / dt))
        u = t_grid[0] + dt * np.arange(m + 1)
        dw = None
        step = dt

    ratio = np.exp((u[:-1]**2 - u[1:]**2) / 2.0)  # <= 1, cell carry factors
    z1 = _mills(u)
    if sigma > 0:
        tail = np.empty(u.size)
        tail[-1] = 0.0
        for k in range(u.size - 2, -1, -1):
            tail[k] = dw[k] + ratio[k] * tail[k + 1]
        z1 = z1 - sigma * tail

    orders: dict[int, np.ndarray] = {0: np.zeros(u.size)}
    if n >= 1:
        orders[1] = z1
    for k in range(1, n):
        g = orders[k]**2 - orders[k - 1]**2
        corr = np.empty(u.size)
        corr[-1] = 0.0
        for i in range(u.size - 2, -1, -1):
            cell = 0.5 * step * (g[i] + ratio[i] * g[i + 1])
            corr[i] = cell + ratio[i] * corr[i + 1]
        orders[k + 1] = orders[k] - corr

    idx = np.array([int(round((t - u[0]) / step)) for t in t_grid])
    if np.any(np.abs(u[idx] - t_grid) > 1e-9 * np.maximum(1.0, np.abs(t_grid))):
        raise ValueError("t_grid must consist of simulation grid nodes")
    z = {k: v[idx] for k, v in orders.items()}
    return ExpansionState(n=n, t_grid=t_grid, z=z, trunc=trunc)


@dataclass(frozen=True)
class ExpansionError:
    error: float
    uncertainty: float
    bracket: RiverEstimate


def expansion_error(path: BrownianPath, n: int, t: float, sigma: float,
                    tol: float, opts: SimOptions) -> ExpansionError:
    """|R_n(t) - R(t)| with the located river as ground truth.

    The expansion reuses the same path as the locator, so the comparison is
    pathwise; half the bracket width is reported as the uncertainty.
    """
    est = locate_river(path, t, sigma, tol, opts)
    if est.status is not RiverStatus.LOCATED:
        raise ValueError(f"river not locatable at t={t}: {est.status.value}")
    trunc = expansion_policy(t)
    if path.t1 + 1e-9 < trunc.horizon:
        path = extend_path(path, trunc.horizon)
    state = expand_river(path, n, [t], sigma, trunc)
    err = abs(float(state.river(n)[0]) - est.mid)
    return ExpansionError(error=err, uncertainty=0.5 * est.width + trunc.tail_tol,
                          bracket=est)
