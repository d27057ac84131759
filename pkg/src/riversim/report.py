"""CSV artifacts with commented metadata headers, and companion figures.

Every table starts with ``#``-prefixed lines carrying the package version,
seed and a hash of the generating configuration, so a fixture diff tells you
which run produced it.  The timestamp line can be suppressed for
byte-reproducible outputs.  Each CSV writer has a figure twin that renders
the same data to a PNG next to the table.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .engine import Trajectory
from .estimators import Theorem2Row
from .river import ExpansionState, RiverEstimate

__all__ = [
    "config_hash",
    "write_csv",
    "trajectory_figure",
    "theorem2_figure",
    "track_figure",
    "expansion_figure",
]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _meta_lines(meta: dict, timestamp: bool) -> list[str]:
    lines = [f"# version={__version__}"]
    for key, val in meta.items():
        lines.append(f"# {key}={val}")
    if timestamp:
        lines.append(f"# generated={datetime.now(timezone.utc).isoformat()}")
    return lines


def write_csv(path: str | Path, header: list[str], rows, meta: dict | None = None,
              timestamp: bool = True, trailer: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for line in _meta_lines(meta or {}, timestamp):
            fh.write(line + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
        if trailer:
            fh.write(trailer + "\n")
    return path


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def trajectory_figure(traj: Trajectory, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(traj.times, traj.values, lw=0.8, label="X(t)")
    ax.plot(traj.times, traj.times, "--", color="grey", lw=0.8, label="diagonal x = t")
    beta = f", beta = {traj.fate.beta:.4g}" if traj.fate.beta is not None else ""
    ax.set_title(f"start ({traj.start[0]:g}, {traj.start[1]:g}): "
                 f"{traj.fate.kind.value}{beta}")
    ax.set_xlabel("t")
    ax.set_ylabel("X")
    lo = min(np.min(traj.values), traj.times[0]) - 1
    hi = min(max(np.max(traj.values), traj.times[-1]) + 1,
             max(3 * traj.times[-1], 10.0))
    ax.set_ylim(lo, hi)
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def theorem2_figure(rows: list[Theorem2Row], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    zs = [r.z for r in rows]
    ax.errorbar(zs, [r.B_hat.p_hat for r in rows],
                yerr=[3 * r.B_hat.std_err for r in rows],
                fmt="o", capsize=3, label="estimated blow-up probability")
    zf = np.linspace(min(zs) - 0.5, max(zs) + 0.5, 200)
    from .calculus import phi
    ax.plot(zf, [phi(z) for z in zf], "-", color="grey", lw=1,
            label="normal CDF limit")
    ax.set_xlabel("z")
    ax.set_ylabel("probability")
    ax.set_title(f"diagonal blow-up profile at s = {rows[0].s:g}")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def track_figure(series: list[RiverEstimate], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    s = np.array([e.s for e in series])
    mid = np.array([e.mid for e in series])
    ax.axhline(0.0, color="grey", lw=0.8, ls="--", label="diagonal")
    ax.plot(s, mid - s, "-o", ms=2.5, lw=0.8, label="located river minus diagonal")
    ax.fill_between(s, np.array([e.lo for e in series]) - s,
                    np.array([e.hi for e in series]) - s, alpha=0.3)
    ax.set_xlabel("s")
    ax.set_ylabel("R(s) - s")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def expansion_figure(state: ExpansionState, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for order in sorted(state.z):
        ax.plot(state.t_grid, state.river(order) - state.t_grid,
                label=f"order {order}")
    ax.set_xlabel("t")
    ax.set_ylabel("approximation minus diagonal")
    ax.set_title("recursive diagonal expansion")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)
