"""Command-line interface: experiment subcommands and result export.

Subcommands: simulate-gait, optimize-gait, optimize-perch, simulate-perch,
track-pid. Each writes a result bundle into the output directory: the trace
CSV (fixed 42-column schema), a metadata JSON sufficient to re-run the
experiment bit-identically, optimized-parameter files where applicable and
a matplotlib plot script.

Exit codes: 0 success, 1 config error, 2 simulation blow-up,
3 optimizer failure.
"""

import argparse
import functools
import json
import os
import sys
import time
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, canonical_config, \
    load_config
from .gait import GaitParams, ManeuverParams, roll_reference
from .opt import GaitCostConfig, PerchCostConfig, gait_cost, optimize, \
    perch_cost
from .sim import (MODE_CONSTRAINED, MODE_TORQUE_PID, GaitConstraint,
                  ManeuverConstraint, PidTracker, SimConfig, Trace,
                  run_simulation)

FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BLOWUP = 2
EXIT_OPTFAIL = 3

# Canonical trace CSV column order.
COLUMNS = (
    ["t"]
    + [f"R{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]
    + ["px", "py", "pz"]
    + [f"thL_{n}" for n in ("p", "m", "e", "f")]
    + [f"thR_{n}" for n in ("p", "m", "e", "f")]
    + ["wx", "wy", "wz", "vx", "vy", "vz"]
    + [f"dthL_{n}" for n in ("p", "m", "e", "f")]
    + [f"dthR_{n}" for n in ("p", "m", "e", "f")]
    + ["Pix", "Piy", "Piz", "E", "roll", "pitch", "yaw"]
)


@dataclass
class ResultBundle:
    """Paths and metadata of one completed experiment."""

    out_dir: str
    trace_csv: str | None
    metadata_json: str
    params_json: str | None
    plot_script: str | None
    metadata: dict


def write_trace_csv(trace: Trace, path: str):
    """Write a trace with round-trippable (17 significant digit) floats."""
    table = trace.table()
    with open(path, "w", newline="") as f:
        f.write(",".join(COLUMNS) + "\n")
        for row in table:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_trace_csv(path: str) -> np.ndarray:
    """Read back a trace table written by :func:`write_trace_csv`."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def unwrapped_roll(trace: Trace) -> np.ndarray:
    """Continuous roll angle (unwrapped Z-Y-X roll) for reporting."""
    return np.unwrap(trace.rpy[:, 0])


def _write_json(path: str, doc: dict):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not JSON serializable: {type(v)}")


def _plot_script_gait(csv_name: str) -> str:
    return f"""\
#!/usr/bin/env python3
\"\"\"Plot angular momentum, body velocity and joint angles of a run.\"\"\"
import matplotlib.pyplot as plt
import numpy as np

data = np.genfromtxt("{csv_name}", delimiter=",", names=True)
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 9))
for k in ("Pix", "Piy", "Piz"):
    axes[0].plot(data["t"], data[k], label=k)
axes[0].set_ylabel("angular momentum [kg m^2/s]")
axes[0].legend()
for k in ("vx", "vy", "vz"):
    axes[1].plot(data["t"], data[k], label=k)
axes[1].set_ylabel("body velocity [m/s]")
axes[1].legend()
for k in ("thL_p", "thL_m", "thL_e", "thL_f"):
    axes[2].plot(data["t"], np.degrees(data[k]), label=k)
axes[2].set_ylabel("left joint angles [deg]")
axes[2].set_xlabel("time [s]")
axes[2].legend()
fig.tight_layout()
plt.show()
"""


def _plot_script_perch(csv_name: str, t0: float, T: float) -> str:
    return f"""\
#!/usr/bin/env python3
\"\"\"Plot body roll rate against the target roll-rate profile.\"\"\"
import matplotlib.pyplot as plt
import numpy as np

data = np.genfromtxt("{csv_name}", delimiter=",", names=True)
t0, T = {t0!r}, {T!r}
eta = 3.0 * (data["t"] - t0) / T - 3.0
phi_dot = 0.5 * np.pi * (3.0 / T) * (1.0 - np.tanh(eta) ** 2)
fig, axes = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
axes[0].plot(data["t"], data["wx"], label="roll rate")
axes[0].plot(data["t"], phi_dot, "--", label="target")
axes[0].set_ylabel("roll rate [rad/s]")
axes[0].legend()
axes[1].plot(data["t"], np.degrees(np.unwrap(data["roll"])), label="roll")
axes[1].plot(data["t"], np.degrees(data["pitch"]), label="pitch")
axes[1].set_ylabel("attitude [deg]")
axes[1].set_xlabel("time [s]")
axes[1].legend()
fig.tight_layout()
plt.show()
"""


def _gait_json(gait: GaitParams) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "mean_deg": list(np.degrees(gait.mean)),
        "amplitude_deg": list(np.degrees(gait.amplitude)),
        "phase_deg": list(np.degrees(gait.phase)),
    }


def _maneuver_json(man: ManeuverParams) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "t0": man.t0,
        "offset_deg": list(np.degrees(man.d)),
        "ramp_period": man.T,
    }


def _bundle(out_dir, command, cfg: ScenarioConfig, args, extra,
            trace: Trace | None, plot_text: str | None,
            params_doc: dict | None, runtime: float) -> ResultBundle:
    os.makedirs(out_dir, exist_ok=True)
    trace_path = None
    if trace is not None:
        trace_path = os.path.join(out_dir, f"{command}_trace.csv")
        write_trace_csv(trace, trace_path)
    plot_path = None
    if plot_text is not None:
        plot_path = os.path.join(out_dir, f"plot_{command}.py")
        with open(plot_path, "w") as f:
            f.write(plot_text)
    params_path = None
    if params_doc is not None:
        params_path = os.path.join(out_dir, f"{command}_params.json")
        _write_json(params_path, params_doc)
    meta = {
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "command": command,
        "seed": cfg.seed,
        "dt": cfg.dt,
        "workers": args.workers,
        "runtime_s": runtime,
        "config": cfg.raw if cfg.raw else canonical_config(),
        "overrides": {"seed": args.seed, "dt": args.dt},
    }
    meta.update(extra)
    meta_path = os.path.join(out_dir, f"{command}_metadata.json")
    _write_json(meta_path, meta)
    return ResultBundle(out_dir=out_dir, trace_csv=trace_path,
                        metadata_json=meta_path, params_json=params_path,
                        plot_script=plot_path, metadata=meta)


def _sim_config(cfg: ScenarioConfig, mode: str,
                t_end: float | None = None) -> SimConfig:
    return SimConfig(dt=cfg.dt, t_end=cfg.t_end if t_end is None else t_end,
                     wind=cfg.wind, mode=mode,
                     record_stride=cfg.record_stride,
                     aero_enabled=cfg.aero_enabled,
                     n_stations=cfg.n_stations)


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config \
        else ScenarioConfig(raw=canonical_config())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.dt is not None:
        if args.dt <= 0:
            raise ConfigError("--dt must be positive")
        cfg.dt = args.dt
    return cfg


def _map_fn(args):
    if args.workers > 1:
        pool = Pool(args.workers)
        return pool.map, pool
    return map, None


def cmd_simulate_gait(args) -> int:
    cfg = _load(args)
    t_start = time.perf_counter()
    controller = GaitConstraint(cfg.gait, cfg.params)
    trace = run_simulation(_sim_config(cfg, MODE_CONSTRAINED), cfg.params,
                           controller)
    runtime = time.perf_counter() - t_start
    Pn = np.linalg.norm(trace.Pi, axis=1)
    extra = {
        "failed": trace.failed,
        "mean_Pi": trace.Pi.mean(axis=0),
        "mean_Pi_norm": float(np.linalg.norm(trace.Pi.mean(axis=0))),
        "peak_Pi_norm": float(Pn.max()),
        "mean_pitch_deg": float(np.degrees(trace.rpy[:, 1].mean())),
        "max_constraint_residual": trace.max_constraint_residual,
    }
    bundle = _bundle(args.out, "simulate-gait", cfg, args, extra, trace,
                     _plot_script_gait("simulate-gait_trace.csv"), None,
                     runtime)
    print(f"simulate-gait: wrote {bundle.trace_csv}")
    print(f"  mean |Pi| = {extra['mean_Pi_norm']:.3e} kg m^2/s, "
          f"failed = {trace.failed}")
    return EXIT_BLOWUP if trace.failed else EXIT_OK


def cmd_optimize_gait(args) -> int:
    cfg = _load(args)
    cost_cfg = GaitCostConfig(params=cfg.params, wind=cfg.wind,
                              horizon=cfg.t_end, dt=cfg.dt,
                              record_stride=cfg.record_stride)
    if cfg.optimizer.gait_lower is not None:
        cost_cfg.lower = cfg.optimizer.gait_lower
        cost_cfg.upper = cfg.optimizer.gait_upper
    cost = functools.partial(gait_cost, config=cost_cfg)
    map_fn, pool = _map_fn(args)
    t_start = time.perf_counter()
    try:
        res = optimize(cost, (cost_cfg.lower, cost_cfg.upper),
                       budget=cfg.optimizer.budget, seed=cfg.seed,
                       x0=cfg.gait.as_vector(),
                       popsize=cfg.optimizer.popsize,
                       sigma0=cfg.optimizer.sigma0, map_fn=map_fn)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    runtime = time.perf_counter() - t_start
    if not res.success:
        print(f"optimize-gait failed: {res.message}", file=sys.stderr)
        return EXIT_OPTFAIL
    best = GaitParams.from_vector(res.best_params)
    trace = run_simulation(_sim_config(cfg, MODE_CONSTRAINED), cfg.params,
                           GaitConstraint(best, cfg.params))
    extra = {
        "initial_cost": float(res.history[0]),
        "best_cost": res.best_cost,
        "n_evals": res.n_evals,
        "cost_history": res.history,
        "best_params": res.best_params,
    }
    bundle = _bundle(args.out, "optimize-gait", cfg, args, extra, trace,
                     _plot_script_gait("optimize-gait_trace.csv"),
                     _gait_json(best), runtime)
    print(f"optimize-gait: cost {extra['initial_cost']:.4g} -> "
          f"{res.best_cost:.4g} in {res.n_evals} evaluations "
          f"({runtime:.1f} s)")
    print(f"  wrote {bundle.params_json}")
    return EXIT_OK


def cmd_optimize_perch(args) -> int:
    cfg = _load(args)
    cost_cfg = PerchCostConfig(params=cfg.params, wind=cfg.wind,
                               T=cfg.maneuver.T, dt=cfg.dt,
                               record_stride=cfg.record_stride)
    if cfg.optimizer.perch_lower is not None:
        cost_cfg.lower = cfg.optimizer.perch_lower
        cost_cfg.upper = cfg.optimizer.perch_upper
    k1 = cfg.gait.as_vector()
    cost = functools.partial(perch_cost, k1=k1, config=cost_cfg)
    map_fn, pool = _map_fn(args)
    t_start = time.perf_counter()
    try:
        res = optimize(cost, (cost_cfg.lower, cost_cfg.upper),
                       budget=cfg.optimizer.budget, seed=cfg.seed,
                       x0=np.clip(cfg.maneuver.as_vector(), cost_cfg.lower,
                                  cost_cfg.upper),
                       popsize=cfg.optimizer.popsize,
                       sigma0=cfg.optimizer.sigma0, map_fn=map_fn)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    runtime = time.perf_counter() - t_start
    if not res.success:
        print(f"optimize-perch failed: {res.message}", file=sys.stderr)
        return EXIT_OPTFAIL
    best = ManeuverParams.from_vector(res.best_params, T=cfg.maneuver.T)
    extra = {
        "initial_cost": float(res.history[0]),
        "best_cost": res.best_cost,
        "n_evals": res.n_evals,
        "cost_history": res.history,
        "best_params": res.best_params,
        "start_phase_fraction": float((best.t0 % (1.0 / cfg.params.flap_hz))
                                      * cfg.params.flap_hz),
    }
    bundle = _bundle(args.out, "optimize-perch", cfg, args, extra, None,
                     None, _maneuver_json(best), runtime)
    print(f"optimize-perch: cost {extra['initial_cost']:.4g} -> "
          f"{res.best_cost:.4g} in {res.n_evals} evaluations")
    print(f"  wrote {bundle.params_json}")
    return EXIT_OK


def _perch_metrics(trace: Trace, t0: float, T: float, flap_hz: float) -> dict:
    roll = np.degrees(unwrapped_roll(trace))
    m0 = trace.t >= t0
    roll_at_t0 = roll[np.argmax(m0)] if m0.any() else 0.0
    excursion = roll[m0] - roll_at_t0 if m0.any() else np.zeros(1)
    idx_peak = int(np.argmax(np.abs(excursion)))
    # tracking error over the maneuver window
    mask = (trace.t >= t0) & (trace.t <= t0 + 2.0 * T)
    err2 = 0.0
    for t, wx in zip(trace.t[mask], trace.qd[mask, 0]):
        err2 += (wx - roll_reference(t, t0, T)[1]) ** 2
    within = trace.t[m0] <= t0 + 0.5
    exc_05 = excursion[within]
    return {
        "failed": trace.failed,
        "roll_excursion_deg_within_0p5s":
            float(exc_05[np.argmax(np.abs(exc_05))]) if exc_05.size else 0.0,
        "peak_roll_excursion_deg": float(excursion[idx_peak]),
        "time_of_peak_roll_s": float(trace.t[m0][idx_peak]),
        "tracking_error_sum_sq": float(err2),
        "start_phase_fraction": float((t0 % (1.0 / flap_hz)) * flap_hz),
    }


def cmd_simulate_perch(args) -> int:
    cfg = _load(args)
    man = cfg.maneuver
    t_start = time.perf_counter()
    controller = ManeuverConstraint(cfg.gait, man, cfg.params)
    t_end = max(cfg.t_end, man.t0 + 2.0 * man.T)
    trace = run_simulation(_sim_config(cfg, MODE_CONSTRAINED, t_end),
                           cfg.params, controller)
    runtime = time.perf_counter() - t_start
    extra = _perch_metrics(trace, man.t0, man.T, cfg.params.flap_hz)
    bundle = _bundle(args.out, "simulate-perch", cfg, args, extra, trace,
                     _plot_script_perch("simulate-perch_trace.csv", man.t0,
                                        man.T), None, runtime)
    print(f"simulate-perch: wrote {bundle.trace_csv}")
    print(f"  roll excursion within 0.5 s of t0: "
          f"{extra['roll_excursion_deg_within_0p5s']:.1f} deg "
          f"(maneuver starts at {extra['start_phase_fraction'] * 100:.1f}% "
          f"of a wingbeat)")
    return EXIT_BLOWUP if trace.failed else EXIT_OK


def cmd_track_pid(args) -> int:
    cfg = _load(args)
    man = cfg.maneuver
    t_start = time.perf_counter()
    tracker = PidTracker(cfg.gait, cfg.params, pid=cfg.pid, maneuver=man)
    t_end = max(cfg.t_end, man.t0 + 2.0 * man.T)
    trace = run_simulation(_sim_config(cfg, MODE_TORQUE_PID, t_end),
                           cfg.params, tracker)
    runtime = time.perf_counter() - t_start
    # joint tracking RMS against the commanded reference
    err2 = np.zeros(8)
    for i, t in enumerate(trace.t):
        ref = tracker.reference(t)
        err2 += (trace.theta[i] - ref.theta) ** 2
    rms = np.sqrt(err2 / max(len(trace.t), 1))
    roll = np.degrees(unwrapped_roll(trace))
    extra = {
        "failed": trace.failed,
        "joint_rms_rad": rms,
        "joint_rms_max_rad": float(rms.max()),
        "min_roll_deg": float(roll.min()),
        "max_roll_deg": float(roll.max()),
        "reached_minus_150deg": bool(roll.min() <= -150.0),
    }
    bundle = _bundle(args.out, "track-pid", cfg, args, extra, trace,
                     _plot_script_perch("track-pid_trace.csv", man.t0,
                                        man.T), None, runtime)
    print(f"track-pid: wrote {bundle.trace_csv}")
    print(f"  joint tracking RMS (max over joints): "
          f"{extra['joint_rms_max_rad']:.3f} rad; roll range "
          f"[{extra['min_roll_deg']:.0f}, {extra['max_roll_deg']:.0f}] deg")
    return EXIT_BLOWUP if trace.failed else EXIT_OK


_COMMANDS = {
    "simulate-gait": cmd_simulate_gait,
    "optimize-gait": cmd_optimize_gait,
    "optimize-perch": cmd_optimize_perch,
    "simulate-perch": cmd_simulate_perch,
    "track-pid": cmd_track_pid,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flapsim",
        description="Flapping-wing robot dynamics and gait optimization.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       help="scenario JSON (defaults to bench values)")
        p.add_argument("--out", default="results",
                       help="output directory (default: results)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--workers", type=int,
                       default=os.cpu_count() or 1,
                       help="parallel cost evaluations (optimize commands)")
        p.add_argument("--dt", type=float, default=None,
                       help="override the integration step [s]")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
