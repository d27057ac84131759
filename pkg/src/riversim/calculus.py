"""Scale-function machinery for scalar diffusions dZ = b(Z) dt + sigma dW.

Everything here reduces to integrals of exp(G) with G(x) = -(2/sigma^2) *
int_c^x b.  The cumulative drift integral is solved once per instance to high
accuracy and cached as a dense interpolant; exit probabilities and expected
exit times are then computed by adaptive quadrature with exponents shifted so
that no intermediate overflows for strongly convex/concave drifts.  Improper
endpoints are truncated where the integrand has certifiably decayed, and
divergence (a legitimate outcome for the explosion test) is detected by a
partial-sum threshold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.special import erfc

__all__ = [
    "Drift",
    "ScaleFunction",
    "Boundary",
    "BoundaryClassification",
    "IndeterminateBoundary",
    "phi",
    "scale",
    "exit_prob",
    "affine_exit_prob",
    "expected_exit_time",
    "feller_classify",
]

_DIVERGENCE_THRESHOLD = 1e12
_TAIL_RELATIVE_FLOOR = 1e-30
_QUAD_LIMIT = 200


class IndeterminateBoundary(RuntimeError):
    """Quadrature could certify neither convergence nor divergence."""


@dataclass(frozen=True)
class Drift:
    """Autonomous scalar drift handle b(u) with a display label."""

    b: Callable[[float], float]
    label: str = "drift"

    def spot_check(self, lo: float, hi: float, n: int = 100) -> float:
        """Crude finite-difference Lipschitz probe; raises on non-finite b."""
        xs = np.linspace(lo, hi, n)
        vals = np.array([self.b(float(x)) for x in xs])
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"drift {self.label!r} is non-finite on [{lo}, {hi}]")
        h = 1e-6 * max(1.0, abs(hi - lo))
        slopes = np.array([(self.b(float(x) + h) - self.b(float(x))) / h for x in xs])
        return float(np.max(np.abs(slopes)))


def phi(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * erfc(-z / math.sqrt(2.0))


def _phi_diff(hi: float, lo: float) -> float:
    """phi(hi) - phi(lo) without cancellation for same-signed large arguments."""
    if lo > hi:
        return -_phi_diff(lo, hi)
    if lo >= 0.0:
        # both upper-tail: difference of complementary CDFs
        return 0.5 * (erfc(lo / math.sqrt(2.0)) - erfc(hi / math.sqrt(2.0)))
    if hi <= 0.0:
        return 0.5 * (erfc(-hi / math.sqrt(2.0)) - erfc(-lo / math.sqrt(2.0)))
    return phi(hi) - phi(lo)


def affine_exit_prob(s: float, A: float, sigma: float, x: float) -> float:
    """Probability that dZ = (s Z + A) dt + sigma dW from x exits [-1, 1] via 1.

    Closed form in terms of normal CDFs of sqrt(2s)/sigma-scaled arguments.
    """
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [-1, 1], got {x}")
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    a = math.sqrt(2.0 * s) / sigma
    shift = 2.0 * A / (sigma * math.sqrt(2.0 * s))
    num = _phi_diff(a * x + shift, -a + shift)
    den = _phi_diff(a + shift, -a + shift)
    return min(1.0, max(0.0, num / den))


class ScaleFunction:
    """Scale function p of an additive-noise diffusion, anchored at p(c) = 0.

    The cumulative drift integral is maintained as a dense ODE interpolant and
    extended lazily; p values are adaptive quadratures of exp(G) on top of it.
    """

    def __init__(self, drift: Drift, sigma: float, anchor: float = 0.0):
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.drift = drift
        self.sigma = sigma
        self.anchor = float(anchor)
        self._span = [self.anchor, self.anchor]
        self._sol_right = None
        self._sol_left = None
        self._p_cache: dict[float, float] = {self.anchor: 0.0}

    # -- cumulative drift integral ------------------------------------------------

    def _ensure_span(self, x: float) -> None:
        pad = 1e-12 + 1e-12 * abs(x)
        if x > self._span[1]:
            hi = max(x + pad, self.anchor + 2.0 * (x - self.anchor))
            self._sol_right = solve_ivp(
                lambda t, y: [self.drift.b(t)], (self.anchor, hi), [0.0],
                rtol=1e-13, atol=1e-14, dense_output=True, method="DOP853",
            )
            self._span[1] = hi
        if x < self._span[0]:
            lo = min(x - pad, self.anchor - 2.0 * (self.anchor - x))
            self._sol_left = solve_ivp(
                lambda t, y: [self.drift.b(t)], (self.anchor, lo), [0.0],
                rtol=1e-13, atol=1e-14, dense_output=True, method="DOP853",
            )
            self._span[0] = lo

    def drift_integral(self, x: float) -> float:
        """int_anchor^x b(u) du."""
        if x == self.anchor:
            return 0.0
        self._ensure_span(x)
        sol = self._sol_right if x > self.anchor else self._sol_left
        return float(sol.sol(x)[0])

    def log_slope(self, x: float) -> float:
        """G(x) = log p'(x) = -(2/sigma^2) * int_anchor^x b."""
        return -2.0 / self.sigma**2 * self.drift_integral(x)

    # -- p itself -------------------------------------------------------------

    def _integrand(self, shift: float) -> Callable[[float], float]:
        return lambda xi: math.exp(min(700.0, self.log_slope(xi) - shift))

    def p_diff(self, a: float, b: float, shift: float = 0.0) -> float:
        """int_a^b exp(G - shift) d xi over finite bounds."""
        if a == b:
            return 0.0
        val, _ = quad(self._integrand(shift), a, b, epsabs=0.0, epsrel=1e-11,
                      limit=_QUAD_LIMIT)
        return val

    def tail_cut(self, direction: int) -> float:
        """Truncation point toward +/- infinity for the integral of exp(G).

        Marches outward until the integrand has fallen below 1e-30 of its
        running maximum and is still decreasing; returns +/-inf if the partial
        integral crosses the divergence threshold first.
        """
        x = self.anchor
        step = 1.0
        g_prev = self.log_slope(x)
        g_max = g_prev
        integral = 0.0
        for _ in range(80):
            x_next = x + direction * step
            g_next = self.log_slope(x_next)
            seg = step * math.exp(min(700.0, max(g_prev, g_next)))
            integral += seg
            if integral > _DIVERGENCE_THRESHOLD:
                return direction * math.inf
            g_max = max(g_max, g_next)
            if g_next - g_max < math.log(_TAIL_RELATIVE_FLOOR) and g_next < g_prev:
                return x_next
            g_prev = g_next
            x = x_next
            step *= 1.6
        raise IndeterminateBoundary(
            f"could not certify tail of scale integrand for {self.drift.label!r} "
            f"toward {'+inf' if direction > 0 else '-inf'}")

    def p(self, x: float) -> float:
        """Scale function value; +/-inf is a legitimate divergent marker."""
        if x in self._p_cache:
            return self._p_cache[x]
        if math.isinf(x):
            cut = self.tail_cut(1 if x > 0 else -1)
            if math.isinf(cut):
                val = cut  # diverges with the sign of the boundary
            else:
                val = self.p_diff(self.anchor, cut)
        else:
            val = self.p_diff(self.anchor, x)
        self._p_cache[x] = val
        return val


def scale(drift: Drift, sigma: float, c: float, x: float) -> float:
    """p(x) anchored at p(c) = 0; +/-inf marks a divergent scale integral."""
    return ScaleFunction(drift, sigma, anchor=c).p(x)


def _resolve_bound(sf: ScaleFunction, bound: float, side: int) -> float:
    """Finite integration bound for a possibly infinite interval end."""
    if math.isinf(bound):
        cut = sf.tail_cut(side)
        if math.isinf(cut):
            raise ValueError(
                f"scale function diverges toward {bound}; exit problem ill-posed")
        return cut
    return bound


def _max_log_slope(sf: ScaleFunction, lo: float, hi: float) -> float:
    xs = np.linspace(lo, hi, 1025)
    return max(sf.log_slope(float(x)) for x in xs)


def exit_prob(drift: Drift, sigma: float, l: float, r: float, x: float,
              anchor: float | None = None) -> float:
    """Probability of exiting (l, r) via r, started at x in (l, r).

    Ratio of scale increments, computed with a common exponent shift so that
    strongly peaked integrands stay inside double range.  Either endpoint may
    be +/-inf provided the scale integral converges on that side.
    """
    if not l < x < r:
        raise ValueError(f"need l < x < r, got l={l}, x={x}, r={r}")
    sf = ScaleFunction(drift, sigma, anchor=x if anchor is None else anchor)
    lb = _resolve_bound(sf, l, -1)
    rb = _resolve_bound(sf, r, +1)
    shift = _max_log_slope(sf, lb, rb)
    num = sf.p_diff(lb, x, shift)
    den = num + sf.p_diff(x, rb, shift)
    if den == 0.0 or not math.isfinite(den):
        raise ValueError("scale increments degenerate over the interval")
    return min(1.0, max(0.0, num / den))


def _ratio_inner(sf: ScaleFunction, y: float, a: float, b: float) -> float:
    """int_a^b exp(G(xi) - G(y)) d xi, the (p-difference)/p'(y) kernel."""
    return sf.p_diff(a, b, shift=sf.log_slope(y))


def _speed_mass_ratio(sf: ScaleFunction, xi: float, a: float, b: float) -> float:
    """int_a^b exp(G(xi) - G(y)) dy, i.e. p'(xi) times the speed mass of [a, b]."""
    g_xi = sf.log_slope(xi)
    integrand = lambda y: math.exp(min(700.0, g_xi - sf.log_slope(y)))
    val, _ = quad(integrand, a, b, epsabs=0.0, epsrel=1e-9, limit=_QUAD_LIMIT)
    return val


def expected_exit_time(drift: Drift, sigma: float, l: float, r: float, x: float,
                       anchor: float | None = None) -> float:
    """Expected exit time from (l, r) started at x.

    Double quadrature of the scale/speed-measure formula, arranged so every
    inner integral is an exp(G(xi) - G(y)) ratio (no large/large cancellation).
    Supports the one-sided problem l = x = -inf with finite r, where the value
    is the supremum over starting points of the expected hitting time of r.
    """
    two_over_s2 = 2.0 / sigma**2
    if math.isinf(l) and l < 0 and math.isinf(x) and x < 0:
        sf = ScaleFunction(drift, sigma, anchor=r if anchor is None else anchor)
        outer = lambda y: _ratio_inner(sf, y, y, r)
        val, _ = quad(outer, -np.inf, r, epsabs=0.0, epsrel=1e-8, limit=_QUAD_LIMIT)
        return two_over_s2 * val
    if math.isinf(l) or math.isinf(r) or math.isinf(x):
        raise ValueError("improper bounds supported only as l = x = -inf, finite r")
    if not l <= x <= r:
        raise ValueError(f"need l <= x <= r, got l={l}, x={x}, r={r}")
    if x == l or x == r:
        return 0.0
    p_up = exit_prob(drift, sigma, l, r, x, anchor=anchor)
    sf = ScaleFunction(drift, sigma, anchor=x if anchor is None else anchor)
    low = quad(lambda y: _ratio_inner(sf, y, l, y), l, x,
               epsabs=0.0, epsrel=1e-8, limit=_QUAD_LIMIT)[0]
    upp = quad(lambda y: _ratio_inner(sf, y, y, r), x, r,
               epsabs=0.0, epsrel=1e-8, limit=_QUAD_LIMIT)[0]
    return two_over_s2 * ((1.0 - p_up) * low + p_up * upp)


class Boundary(enum.Enum):
    NO_EXPLOSION = "no_explosion"
    EXPLODES_TO_PLUS_INFINITY = "explodes_to_plus_infinity"
    EXPLODES_TO_MINUS_INFINITY = "explodes_to_minus_infinity"
    BOTH_POSSIBLE = "both_possible"


@dataclass(frozen=True)
class BoundaryClassification:
    kind: Boundary
    v_left: float
    v_right: float


def _feller_v(sf: ScaleFunction, direction: int, limit: float) -> float:
    """v toward one boundary by a single log-space sweep.

    Marches a mesh refined where G varies fast, accumulating the speed-measure
    mass M and the integral of w = p' * M as running log-sum-exps, so no
    intermediate ever leaves double range.  Divergence is declared when the
    running total passes the threshold; convergence when the pointwise w
    decays with a log-log slope steeper than -1.5 (integrable tail, which is
    then added as a power-law estimate).
    """
    log_thresh = math.log(_DIVERGENCE_THRESHOLD)
    log_2s2 = math.log(2.0 / sf.sigma**2)
    x = sf.anchor
    g = sf.log_slope(x)
    log_m = -math.inf   # log of m-mass accumulated from the anchor
    log_v = -math.inf
    window: list[tuple[float, float]] = []
    for k in range(500_000):
        g_slope = -2.0 * sf.drift.b(x) / sf.sigma**2
        rel = abs(x - sf.anchor)
        step = min(0.2 / (abs(g_slope) + 1e-9), 0.05 * (1.0 + rel))
        step = max(step, 1e-9 * (1.0 + rel))
        x_next = x + direction * step
        if math.isfinite(limit) and direction * (x_next - limit) >= 0:
            x_next = limit
            step = abs(x_next - x)
            if step == 0.0:
                return math.exp(min(700.0, log_v))
        g_next = sf.log_slope(x_next)
        g_mid = 0.5 * (g + g_next)
        log_m = np.logaddexp(log_m, log_2s2 + math.log(step) - g_mid)
        log_w = g_next + log_m
        log_v = np.logaddexp(log_v, math.log(step) + log_w)
        if log_v > log_thresh:
            return math.inf
        if math.isfinite(limit) and x_next == limit:
            return math.exp(min(700.0, log_v))
        window.append((math.log(abs(x_next - sf.anchor) + 1e-12), log_w))
        if len(window) >= 64 and k % 32 == 0:
            xs = np.array([p[0] for p in window[-64:]])
            ws = np.array([p[1] for p in window[-64:]])
            slope = np.polyfit(xs, ws, 1)[0]
            if slope < -1.5 and np.all(np.isfinite(ws)):
                tail = math.exp(min(700.0, ws[-1])) * (abs(x_next - sf.anchor)
                                                       / (-slope - 1.0))
                return math.exp(min(700.0, log_v)) + tail
        x, g = x_next, g_next
    raise IndeterminateBoundary(
        f"explosion test inconclusive for {sf.drift.label!r} toward "
        f"{'+inf' if direction > 0 else '-inf'}")


def feller_classify(drift: Drift, sigma: float, l: float = -math.inf,
                    r: float = math.inf, anchor: float = 0.0) -> BoundaryClassification:
    """Explosion test: which boundaries are reachable in finite time."""
    sf = ScaleFunction(drift, sigma, anchor=anchor)
    v_l = _feller_v(sf, -1, l)
    v_r = _feller_v(sf, +1, r)
    if math.isinf(v_l) and math.isinf(v_r):
        kind = Boundary.NO_EXPLOSION
    elif math.isinf(v_l):
        kind = Boundary.EXPLODES_TO_PLUS_INFINITY
    elif math.isinf(v_r):
        kind = Boundary.EXPLODES_TO_MINUS_INFINITY
    else:
        kind = Boundary.BOTH_POSSIBLE
    return BoundaryClassification(kind=kind, v_left=v_l, v_right=v_r)
