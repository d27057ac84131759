"""Numerics for a quadratic SDE whose solutions split along a random river.

The deterministic equation x' = x(x - t) has an explicit solution and a
critical start separating finite-time blow-up from decay to zero; under
additive noise the same trichotomy holds path by path, organised by a random
borderline ("river") that hugs the diagonal x = t.  This package simulates
the equation, locates the river pathwise, evaluates the supporting
scale-function calculus, and estimates the associated probabilities by
reproducible Monte Carlo.
"""

__version__ = "0.1.0"

from .closed_form import (
    BLOWN_UP,
    NEVER,
    DetSolution,
    Regime,
    blowup_time_deterministic,
    classify_deterministic,
    critical_initial,
    river_series,
    solve_deterministic,
)
from .paths import BrownianPath, Grid, dump_path, extend_path, increment, \
    load_path, make_path, refine
from .linear import LinearModel, TruncationPolicy, linear_river, \
    linear_river_initial, solve_linear
from .engine import BundleResult, Fate, FateKind, HitResult, SimOptions, \
    Trajectory, band_exit, first_hit, simulate, simulate_bundle, simulate_fate, \
    simulate_general, trajectory_to_csv
from .calculus import Boundary, BoundaryClassification, Drift, \
    IndeterminateBoundary, ScaleFunction, affine_exit_prob, exit_prob, \
    expected_exit_time, feller_classify, phi, scale
from .estimators import MCEstimate, Theorem2Row, estimate_B, estimate_C, \
    estimate_chi, estimate_p_plus, estimate_rho, mean_band_exit_time, \
    theorem2_curve
from .river import DiagnosticReport, ExpansionError, ExpansionState, \
    OscillationEvents, RiverEstimate, RiverStatus, expand_river, \
    expansion_error, expansion_policy, locate_river, oscillation_events, \
    theorem4_diagnostic, track_river
