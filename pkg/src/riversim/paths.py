"""Reproducible Brownian motion paths on uniform time grids.

A path is generated from a counter-based (Philox) stream keyed by its seed,
so the same ``(seed, grid)`` pair always reproduces the same values, bit for
bit, independently of how many other paths are being built concurrently.
Interior refinement uses the Brownian bridge conditional law and never
touches existing grid-node values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "BrownianPath",
    "make_path",
    "refine",
    "increment",
    "extend_path",
    "dump_path",
    "load_path",
]

# Stream tags keep the main increment stream, bridge refinement and any
# auxiliary draws on disjoint Philox keys for the same user seed.
_TAG_INCREMENTS = 0
_TAG_BRIDGE = 1

_REL_TOL = 1e-9


def _generator(seed: int, tag: int) -> np.random.Generator:
    """Philox generator on the (seed, tag) key; independent streams per tag."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = (int(tag) << 64) | (int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Grid:
    """Uniform time grid [t0, t1] with step dt."""

    t0: float
    t1: float
    dt: float

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"grid step must be positive, got dt={self.dt}")
        if not (self.t1 > self.t0):
            raise ValueError(f"grid needs t1 > t0, got [{self.t0}, {self.t1}]")

    @property
    def n_nodes(self) -> int:
        return int(round((self.t1 - self.t0) / self.dt)) + 1

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_nodes)

    def index_of(self, t: float) -> int:
        """Node index of time t; raises for off-grid queries."""
        k = int(round((t - self.t0) / self.dt))
        if k < 0 or k >= self.n_nodes or abs(self.t0 + k * self.dt - t) > _REL_TOL * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a node of grid [{self.t0}, {self.t1}] @ dt={self.dt}")
        return k


@dataclass(frozen=True)
class BrownianPath:
    """Wiener path W sampled on a uniform grid, W(t0) = 0.

    ``pristine`` marks paths produced directly by :func:`make_path`; only
    those can be horizon-extended by re-generation from the same stream.
    """

    seed: int
    grid: Grid
    values: np.ndarray = field(repr=False)
    pristine: bool = True

    @property
    def t0(self) -> float:
        return self.grid.t0

    @property
    def t1(self) -> float:
        return self.grid.t1

    @property
    def dt(self) -> float:
        return self.grid.dt

    def value_at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def make_path(seed: int, grid: Grid) -> BrownianPath:
    """Generate W on the grid; increments are i.i.d. N(0, dt).

    Draws come from a per-path Philox stream, so path k of a batch is
    reproducible regardless of batch size or thread schedule.  The stream is
    consumed in grid order, hence a path built on a longer grid (same seed,
    same t0, same dt) agrees with the shorter one on the shared prefix.
    """
    rng = _generator(seed, _TAG_INCREMENTS)
    n_steps = grid.n_nodes - 1
    incr = rng.standard_normal(n_steps) * np.sqrt(grid.dt)
    values = np.empty(grid.n_nodes)
    values[0] = 0.0
    np.cumsum(incr, out=values[1:])
    values.flags.writeable = False
    return BrownianPath(seed=seed, grid=grid, values=values)


def refine(path: BrownianPath, factor: int) -> BrownianPath:
    """Refine the grid by an integer factor, preserving existing node values.

    Interior points are drawn from the Brownian bridge conditional law, cell
    by cell, from a dedicated stream keyed by (seed, factor, n_cells) so the
    result is deterministic for a given input path.
    """
    if factor < 2:
        raise ValueError(f"refinement factor must be >= 2, got {factor}")
    n_cells = path.grid.n_nodes - 1
    rng = _generator(path.seed, _TAG_BRIDGE + (factor << 8) + (n_cells << 40))
    dt_new = path.dt / factor
    n_new = n_cells * factor + 1
    values = np.empty(n_new)
    values[::factor] = path.values
    # Sequential conditional sampling inside each coarse cell: given the
    # remaining increment R over remaining time r, the next substep is
    # N(R*h/r, h*(r-h)/r).
    z = rng.standard_normal((n_cells, factor - 1))
    for j in range(n_cells):
        w = path.values[j]
        r = path.dt
        rem = path.values[j + 1] - path.values[j]
        for i in range(factor - 1):
            mean = rem * dt_new / r
            var = dt_new * (r - dt_new) / r
            step = mean + np.sqrt(var) * z[j, i]
            w += step
            rem -= step
            r -= dt_new
            values[j * factor + i + 1] = w
    values.flags.writeable = False
    grid = Grid(path.t0, path.t1, dt_new)
    return BrownianPath(seed=path.seed, grid=grid, values=values, pristine=False)


def increment(path: BrownianPath, a: float, b: float) -> float:
    """W(b) - W(a) for grid nodes a <= b."""
    ia = path.grid.index_of(a)
    ib = path.grid.index_of(b)
    if ib < ia:
        raise ValueError(f"increment endpoints out of order: {a} > {b}")
    return float(path.values[ib] - path.values[ia])


def extend_path(path: BrownianPath, t1_new: float) -> BrownianPath:
    """Same Brownian realisation on a longer horizon.

    Valid only for paths produced by :func:`make_path` (the Philox stream is
    consumed in grid order, so re-generation on the longer grid reproduces
    the original values as a prefix).
    """
    if not path.pristine:
        raise ValueError("only directly generated paths can be extended")
    if t1_new <= path.t1:
        return path
    n_cells = int(np.ceil(round((t1_new - path.t0) / path.dt, 9)))
    longer = make_path(path.seed, Grid(path.t0, path.t0 + n_cells * path.dt, path.dt))
    return longer


_HEADER = struct.Struct("<q3d")


def dump_path(path: BrownianPath, fileobj) -> None:
    """Binary dump: little-endian (seed, t0, t1, dt) header + float64 values."""
    fileobj.write(_HEADER.pack(path.seed, path.t0, path.t1, path.dt))
    fileobj.write(np.ascontiguousarray(path.values, dtype="<f8").tobytes())


def load_path(fileobj) -> BrownianPath:
    seed, t0, t1, dt = _HEADER.unpack(fileobj.read(_HEADER.size))
    grid = Grid(t0, t1, dt)
    values = np.frombuffer(fileobj.read(8 * grid.n_nodes), dtype="<f8").astype(np.float64)
    values.flags.writeable = False
    return BrownianPath(seed=seed, grid=grid, values=values, pristine=False)
