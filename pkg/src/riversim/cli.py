"""Command-line surface: every subcommand writes a CSV artifact (with a
commented metadata header) and, unless ``--no-plot`` is given, a PNG figure
next to it.  Exit codes: 0 success, 2 configuration/validation error, 1
runtime failure.  ``RIVER_THREADS`` supplies the default for ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .engine import SimOptions, simulate, trajectory_to_csv
from .estimators import estimate_B, estimate_C, estimate_chi, estimate_p_plus, \
    estimate_rho, theorem2_curve
from .paths import Grid, make_path
from .report import config_hash, expansion_figure, theorem2_figure, \
    track_figure, trajectory_figure, write_csv
from .river import expand_river, expansion_policy, locate_river, track_river
from .validate import SUITES, run_suite

__all__ = ["main", "RunConfig"]

_COMMANDS = ("simulate", "estimate", "theorem2", "locate", "track", "expand",
             "validate")

# name -> (parser, default); None default means required
_PARAM_SPECS: dict[str, dict] = {
    "simulate": {"s": (float, None), "x": (float, None), "sigma": (float, 1.0),
                 "dt0": (float, 1e-3), "horizon": (float, None), "adapt": (bool, False)},
    "estimate": {"kind": (str, "B"), "s": (float, None), "x": (float, None),
                 "sigma": (float, 1.0), "n": (int, 1000), "dt0": (float, 1e-3),
                 "horizon": (float, None)},
    "theorem2": {"s": (float, None), "z": (str, "-2,-1,0,1,2"),
                 "sigma": (float, 1.0), "n": (int, 10000), "dt0": (float, 1e-3),
                 "horizon": (float, None)},
    "locate": {"s": (float, None), "sigma": (float, 1.0), "tol": (float, 1e-3),
               "dt0": (float, 1e-3), "horizon": (float, None)},
    "track": {"s": (str, None), "sigma": (float, 1.0), "tol": (float, 1e-3),
              "dt0": (float, 1e-3), "horizon": (float, None)},
    "expand": {"t": (str, None), "order": (int, 3), "sigma": (float, 0.0),
               "dt0": (float, 1e-3)},
    "validate": {"suite": (str, "all")},
}

_ESTIMATE_KINDS = ("B", "C", "p_plus", "rho", "chi")


@dataclass
class RunConfig:
    command: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None
    threads: int = 1
    no_timestamp: bool = False
    no_plot: bool = False

    def validated(self) -> "RunConfig":
        if self.command not in _COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        spec = _PARAM_SPECS[self.command]
        unknown = set(self.parameters) - set(spec)
        if unknown:
            raise ValueError(f"unknown parameter(s) for {self.command}: {sorted(unknown)}")
        resolved = {}
        for name, (typ, default) in spec.items():
            raw = self.parameters.get(name, default)
            if raw is None and default is None and name in ("s", "x", "t"):
                raise ValueError(f"{self.command} requires --{name}")
            resolved[name] = raw if raw is None else (typ(raw) if typ is not bool else bool(raw))
        if self.command == "estimate" and resolved["kind"] not in _ESTIMATE_KINDS:
            raise ValueError(f"estimate kind must be one of {_ESTIMATE_KINDS}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        for positive in ("sigma", "dt0", "tol", "n"):
            if positive in resolved and resolved[positive] is not None \
                    and resolved[positive] <= 0:
                raise ValueError(f"{positive} must be positive")
        return RunConfig(command=self.command, parameters=resolved, seed=self.seed,
                         out=self.out, threads=self.threads,
                         no_timestamp=self.no_timestamp, no_plot=self.no_plot)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _parse_grid(text: str) -> np.ndarray:
    """'a:b:step' range syntax or comma-separated values."""
    if ":" in text:
        a, b, step = (float(p) for p in text.split(":"))
        return np.arange(a, b + 1e-9, step)
    return np.array([float(p) for p in text.split(",")])


def _opts(params: dict) -> SimOptions:
    """Horizon flag is relative: each start resolves t_end = s + horizon."""
    return SimOptions(dt0=params["dt0"], span=params.get("horizon"),
                      adapt=bool(params.get("adapt", False)))


def _meta(cfg: RunConfig) -> dict:
    return {"seed": cfg.seed, "config": config_hash(asdict(cfg))}


def _out_path(cfg: RunConfig, default_name: str) -> Path:
    return Path(cfg.out) if cfg.out else Path(default_name)


def _figure_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".png")


# ------------------------------------------------------------- handlers --

def _run_simulate(cfg: RunConfig) -> str:
    p = cfg.parameters
    s, x = p["s"], p["x"]
    opts = _opts(p).resolved(s)
    path = make_path(cfg.seed, Grid(s, opts.t_end, p["dt0"]))
    traj = simulate(s, x, p["sigma"], path, opts)
    out = _out_path(cfg, "trajectory.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        for k, v in _meta(cfg).items():
            fh.write(f"# {k}={v}\n")
        if not cfg.no_timestamp:
            from datetime import datetime, timezone
            fh.write(f"# generated={datetime.now(timezone.utc).isoformat()}\n")
        trajectory_to_csv(traj, fh)
    if not cfg.no_plot:
        trajectory_figure(traj, _figure_path(out))
    beta = f", beta={traj.fate.beta:.6g}" if traj.fate.beta is not None else ""
    return f"{out}: fate={traj.fate.kind.value}{beta}, {traj.times.size} samples"


def _run_estimate(cfg: RunConfig) -> str:
    p = cfg.parameters
    s = p["s"]
    opts = _opts(p)
    kind = p["kind"]
    fns = {"B": estimate_B, "C": estimate_C, "p_plus": estimate_p_plus,
           "rho": estimate_rho}
    if kind == "chi":
        est = estimate_chi(s, p["sigma"], p["n"], opts, cfg.seed, cfg.threads)
        x_used = 0.0
    else:
        x_used = p["x"]
        if x_used is None:
            raise ValueError(f"estimate kind {kind} requires --x")
        est = fns[kind](s, x_used, p["sigma"], p["n"], opts, cfg.seed, cfg.threads)
    out = _out_path(cfg, f"estimate_{kind}.csv")
    write_csv(out, ["kind", "s", "x", "p_hat", "std_err", "n", "n_undecided"],
              [[kind, s, x_used, est.p_hat, est.std_err, est.n, est.n_undecided]],
              meta=_meta(cfg), timestamp=not cfg.no_timestamp)
    return (f"{out}: {kind}({s:g}, {x_used:g}) = {est.p_hat:.4f} "
            f"+- {est.std_err:.4f} (n={est.n}, undecided={est.n_undecided})")


def _run_theorem2(cfg: RunConfig) -> str:
    p = cfg.parameters
    s = p["s"]
    zs = _parse_grid(p["z"])
    rows = theorem2_curve(s, zs, p["sigma"], p["n"], _opts(p), cfg.seed,
                          cfg.threads)
    out = _out_path(cfg, "theorem2.csv")
    write_csv(out, ["s", "z", "x", "p_hat", "std_err", "n", "n_undecided", "phi_z"],
              [[r.s, r.z, r.x, r.B_hat.p_hat, r.B_hat.std_err, r.B_hat.n,
                r.B_hat.n_undecided, r.phi_z] for r in rows],
              meta=_meta(cfg), timestamp=not cfg.no_timestamp)
    if not cfg.no_plot:
        theorem2_figure(rows, _figure_path(out))
    mid = min(rows, key=lambda r: abs(r.z))
    return f"{out}: {len(rows)} rows; z={mid.z:g} row has p_hat={mid.B_hat.p_hat:.4f}"


def _run_locate(cfg: RunConfig) -> str:
    p = cfg.parameters
    s = p["s"]
    opts = _opts(p).resolved(s)
    path = make_path(cfg.seed, Grid(s, opts.t_end, p["dt0"]))
    est = locate_river(path, s, p["sigma"], p["tol"], _opts(p))
    out = _out_path(cfg, "river.csv")
    write_csv(out, ["s", "lo", "hi", "width", "status"],
              [[est.s, est.lo, est.hi, est.width, est.status.value]],
              meta=_meta(cfg), timestamp=not cfg.no_timestamp)
    return f"{out}: status={est.status.value}, bracket [{est.lo:.6g}, {est.hi:.6g}]"


def _run_track(cfg: RunConfig) -> str:
    p = cfg.parameters
    s_grid = _parse_grid(p["s"])
    s0 = float(s_grid[0])
    opts = _opts(p)
    horizon = opts.resolved(float(s_grid[-1])).t_end
    path = make_path(cfg.seed, Grid(s0, horizon, p["dt0"]))
    series = track_river(path, s_grid, p["sigma"], p["tol"], opts)
    out = _out_path(cfg, "track.csv")
    write_csv(out, ["s", "lo", "hi", "width", "status"],
              [[e.s, e.lo, e.hi, e.width, e.status.value] for e in series],
              meta=_meta(cfg), timestamp=not cfg.no_timestamp)
    if not cfg.no_plot:
        located = [e for e in series if math.isfinite(e.lo)]
        if located:
            track_figure(located, _figure_path(out))
    n_loc = sum(e.status.value == "located" for e in series)
    return f"{out}: {n_loc}/{len(series)} points located"


def _run_expand(cfg: RunConfig) -> str:
    p = cfg.parameters
    ts = _parse_grid(p["t"])
    trunc = expansion_policy(float(ts[-1]))
    sigma = p["sigma"]
    if sigma > 0:
        t0 = float(ts[0])
        dt0 = p["dt0"]
        grid = Grid(t0, t0 + dt0 * math.ceil((trunc.horizon - t0) / dt0), dt0)
        path = make_path(cfg.seed, grid)
        ts = t0 + dt0 * np.round((ts - t0) / dt0)  # snap to grid nodes
        state = expand_river(path, p["order"], ts, sigma, trunc)
    else:
        state = expand_river(None, p["order"], ts, 0.0, trunc, dt=p["dt0"])
    out = _out_path(cfg, "expansion.csv")
    rows = []
    for order in sorted(state.z):
        for t, val in zip(state.t_grid, state.river(order)):
            rows.append([t, order, val])
    write_csv(out, ["t", "n", "Rn"], rows, meta=_meta(cfg),
              timestamp=not cfg.no_timestamp)
    if not cfg.no_plot:
        expansion_figure(state, _figure_path(out))
    return f"{out}: orders 0..{p['order']} at {state.t_grid.size} times"


def _run_validate(cfg: RunConfig) -> str:
    results = run_suite(cfg.parameters["suite"], threads=cfg.threads, echo=True)
    n_fail = sum(not r.passed for r in results)
    if n_fail:
        raise RuntimeError(f"{n_fail} acceptance criterion(s) failed")
    return f"all {len(results)} criteria passed"


_HANDLERS = {"simulate": _run_simulate, "estimate": _run_estimate,
             "theorem2": _run_theorem2, "locate": _run_locate,
             "track": _run_track, "expand": _run_expand,
             "validate": _run_validate}


# --------------------------------------------------------------- parsing --

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riversim",
        description="Simulate the quadratic SDE with additive noise, locate its "
                    "repelling river, and verify the supporting calculus.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    flag_types = {"s": str, "x": float, "z": str, "t": str, "sigma": float,
                  "n": int, "dt0": float, "horizon": float, "tol": float,
                  "kind": str, "suite": str, "order": int, "adapt": bool}
    for command, spec in _PARAM_SPECS.items():
        sp = sub.add_parser(command)
        for name in spec:
            if name == "adapt":
                sp.add_argument("--adapt", action="store_true", default=None)
            else:
                sp.add_argument(f"--{name}", type=flag_types.get(name, str),
                                default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--no-timestamp", action="store_true")
        sp.add_argument("--no-plot", action="store_true")
        sp.add_argument("--dump-config", action="store_true")
        sp.add_argument("--config", type=str, default=None)
    return parser


def _assemble_config(args: argparse.Namespace) -> RunConfig:
    file_cfg: dict = {}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        if file_cfg.get("command", args.command) != args.command:
            raise ValueError("config file command does not match the subcommand")
    params = dict(file_cfg.get("parameters", {}))
    spec = _PARAM_SPECS[args.command]
    for name in spec:
        cli_val = getattr(args, name.replace("-", "_"), None)
        if cli_val is not None:
            params[name] = cli_val
    # track/theorem2 accept float-ish --s; normalise scalars for grid params
    env_threads = os.environ.get("RIVER_THREADS")
    threads = (args.threads if args.threads is not None
               else file_cfg.get("threads", int(env_threads) if env_threads else 1))
    return RunConfig(
        command=args.command,
        parameters=params,
        seed=args.seed if args.seed is not None else file_cfg.get("seed", 0),
        out=args.out if args.out is not None else file_cfg.get("out"),
        threads=threads,
        no_timestamp=bool(args.no_timestamp or file_cfg.get("no_timestamp", False)),
        no_plot=bool(args.no_plot or file_cfg.get("no_plot", False)),
    )


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _assemble_config(args).validated()
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if args.dump_config:
        print(cfg.to_json())
        return 0
    try:
        summary = _HANDLERS[cfg.command](cfg)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
