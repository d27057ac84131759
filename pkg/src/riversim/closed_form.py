"""Exact solution of the deterministic equation x' = x(x - t).

The initial value sqrt(2/pi) separates three fates: larger starts blow up in
finite time, smaller ones decay to zero, and the critical solution grows like
t + 1/t - 2/t^3 + O(t^-5).  Blow-up is an expected regime here, not a fault,
so it is signalled by the value ``math.inf`` rather than an exception; the
same convention makes ``blowup_time_deterministic`` return ``inf`` for starts
that never blow up.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf, erfc, erfcx

__all__ = [
    "Regime",
    "DetSolution",
    "BLOWN_UP",
    "NEVER",
    "critical_initial",
    "solve_deterministic",
    "blowup_time_deterministic",
    "classify_deterministic",
    "river_series",
]

#: Value-level marker for a solution evaluated at or past its blow-up time.
BLOWN_UP = math.inf

#: Returned by blowup_time_deterministic for starts that never blow up.
NEVER = math.inf

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_CRITICAL = math.sqrt(2.0 / math.pi)

# Below this distance from the critical start the reduced erfcx formula is
# used: the general denominator cancels to ~exp(-t^2/2) and loses all digits
# by t ~ 6 when formed naively.
_CRITICAL_TOL = 1e-12


class Regime(enum.Enum):
    BLOWS_UP = "blows_up"
    CRITICAL = "critical"
    CONVERGES_TO_ZERO = "converges_to_zero"


@dataclass(frozen=True)
class DetSolution:
    """Initial value paired with its asymptotic fate."""

    x0: float
    regime: Regime


def critical_initial() -> float:
    """The borderline initial value sqrt(2/pi)."""
    return _CRITICAL


def classify_deterministic(x0: float) -> Regime:
    if x0 > _CRITICAL:
        return Regime.BLOWS_UP
    if x0 == _CRITICAL:
        return Regime.CRITICAL
    return Regime.CONVERGES_TO_ZERO


def _denominator(d: float, t: float) -> float:
    """2 - x0*sqrt(2*pi)*erf(t/sqrt(2)), with d = x0 - sqrt(2/pi) factored out.

    Written as 2*erfc(z) - d*sqrt(2*pi)*erf(z) both terms are individually
    accurate, so no digits are lost to cancellation between 2 and the erf
    term.  erfc underflows gracefully to 0 for t beyond ~38.
    """
    z = t / _SQRT2
    return 2.0 * erfc(z) - d * _SQRT_2PI * erf(z)


def solve_deterministic(x0: float, t: float) -> float:
    """x(t) from x(0) = x0; ``BLOWN_UP`` (= inf) once t reaches the blow-up time."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if x0 == 0.0:
        return 0.0
    d = x0 - _CRITICAL
    if abs(d) < _CRITICAL_TOL:
        # Reduced critical branch: x_c(t) = sqrt(2/pi) / erfcx(t/sqrt(2)).
        return _CRITICAL / erfcx(t / _SQRT2)
    den = _denominator(d, t)
    if den <= 0.0:
        return BLOWN_UP
    return 2.0 * x0 * math.exp(-t * t / 2.0) / den


def blowup_time_deterministic(x0: float) -> float:
    """The time t* where the explicit solution's denominator vanishes.

    Bracketed root finding to 1e-12 absolute; ``NEVER`` (= inf) for
    x0 <= sqrt(2/pi).
    """
    d = x0 - _CRITICAL
    if d <= 0.0:
        return NEVER
    f = lambda t: _denominator(d, t)
    hi = 1.0
    while f(hi) > 0.0:
        hi *= 2.0
        if hi > 1e3:  # unreachable for d > 0 in double precision
            return NEVER
    return float(brentq(f, 0.0, hi, xtol=1e-12, rtol=8.9e-16))


def river_series(t: float, order: int) -> float:
    """Partial sums of the large-t expansion: t, t + 1/t, t + 1/t - 2/t^3."""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    out = t
    if order >= 2:
        out += 1.0 / t
    if order >= 3:
        out -= 2.0 / t**3
    return out
