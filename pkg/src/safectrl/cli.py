"""Command-line front end: run built-in or file-defined scenarios and write
trajectory CSVs, summary metrics, a reproducibility manifest and optional
static plots.

Exit codes: 0 success, 1 runtime/config error, 2 a scenario that promises
safety violated its barrier.  Demonstration scenarios whose point is the
violation (the exponential barrier on the perturbed plants) exit 0; the
violation shows up in metrics.json instead.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .plants import furuta as fur
from .sim import (
    ConfigError,
    Scenario,
    SimulationError,
    TrajectoryLog,
    compute_metrics,
    run_closed_loop,
)

# Barrier dips below this are reported as safety violations (matches the
# tolerance the acceptance checks use for "never leaves the safe set").
SAFETY_SLACK = 1e-6

_STATE_COLUMNS = {
    "furuta": ("theta0", "theta1", "dtheta0", "dtheta1"),
    "maglev": ("x_v", "theta_p", "theta_r", "dx_v", "dtheta_p", "dtheta_r"),
}
_OUTPUT_COLUMNS = {
    "furuta": ("theta0", "theta1"),
    "maglev": ("r1", "r2", "r3"),
}


def csv_columns(traj: TrajectoryLog) -> tuple[list[str], np.ndarray]:
    """Column names and the numeric matrix for trajectory.csv.

    Every log field appears; booleans are 0/1 and the QP status uses the
    integer codes from safectrl.sim.  Values are written with 17 significant
    digits, so binary64 round-trips exactly.
    """
    sc = traj.scenario
    names: list[str] = ["t"]
    cols: list[np.ndarray] = [traj.t]

    for label, arr in (
        ("x", traj.states), ("y", traj.outputs), ("ref", traj.references),
    ):
        base = _STATE_COLUMNS[sc.plant] if label == "x" else _OUTPUT_COLUMNS[sc.plant]
        for i in range(arr.shape[1]):
            names.append(f"{label}_{base[i]}")
            cols.append(arr[:, i])
    for label, arr in (
        ("u_nominal", traj.u_nominal),
        ("u_filtered", traj.u_filtered),
        ("u_applied", traj.u_applied),
    ):
        for i in range(arr.shape[1]):
            names.append(f"{label}_{i + 1}")
            cols.append(arr[:, i])
    for label, arr in (
        ("h", traj.h), ("h_dot", traj.h_dot), ("s", traj.s_surface),
        ("mu_lo", traj.mu_lo),
    ):
        for j in range(arr.shape[1]):
            names.append(f"{label}_{j + 1}")
            cols.append(arr[:, j])
    for j in range(traj.constraint_active.shape[1]):
        names.append(f"active_{j + 1}")
        cols.append(traj.constraint_active[:, j].astype(float))
    names += ["qp_status", "qp_iterations", "qp_fallback", "clamp_hit"]
    cols += [
        traj.qp_status.astype(float),
        traj.qp_iterations.astype(float),
        traj.qp_fallback.astype(float),
        traj.clamp_hit.astype(float),
    ]
    return names, np.column_stack(cols)


def write_trajectory_csv(traj: TrajectoryLog, path: Path) -> None:
    names, matrix = csv_columns(traj)
    with open(path, "w", newline="\n") as f:
        f.write(",".join(names) + "\n")
        np.savetxt(f, matrix, fmt="%.17g", delimiter=",", newline="\n")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _downsample(n: int, limit: int = 4000) -> slice:
    return slice(None, None, max(1, n // limit))


def write_plots(traj: TrajectoryLog, out_dir: Path) -> list[Path]:
    """One SVG per channel group (states, outputs, inputs, barrier, surface)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    sc = traj.scenario
    step = _downsample(traj.t.size)
    t = traj.t[step]
    written: list[Path] = []

    def save(fig, name: str) -> None:
        path = out_dir / name
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    for i, label in enumerate(_STATE_COLUMNS[sc.plant]):
        ax.plot(t, traj.states[step, i], label=label, lw=0.9)
    ax.set_xlabel("t [s]"), ax.set_ylabel("state"), ax.legend(fontsize=8)
    ax.set_title(f"{sc.name}: states")
    save(fig, "states.svg")

    fig, ax = plt.subplots(figsize=(7, 4))
    for i, label in enumerate(_OUTPUT_COLUMNS[sc.plant]):
        ax.plot(t, traj.outputs[step, i], label=label, lw=0.9)
        ax.plot(t, traj.references[step, i], "--", label=f"{label} ref", lw=0.8)
    ax.set_xlabel("t [s]"), ax.set_ylabel("output"), ax.legend(fontsize=8)
    ax.set_title(f"{sc.name}: outputs and references")
    save(fig, "outputs.svg")

    fig, ax = plt.subplots(figsize=(7, 4))
    for i in range(traj.u_applied.shape[1]):
        ax.plot(t, traj.u_nominal[step, i], ":", lw=0.8, label=f"u{i + 1} nominal")
        ax.plot(t, traj.u_applied[step, i], lw=0.9, label=f"u{i + 1} applied")
    ax.set_xlabel("t [s]"), ax.set_ylabel("input"), ax.legend(fontsize=8)
    ax.set_title(f"{sc.name}: inputs")
    save(fig, "inputs.svg")

    if traj.n_constraints:
        fig, ax = plt.subplots(figsize=(7, 4))
        for j in range(traj.n_constraints):
            ax.plot(t, traj.h[step, j], lw=0.9, label=f"h{j + 1}")
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_xlabel("t [s]"), ax.set_ylabel("barrier value"), ax.legend(fontsize=8)
        ax.set_title(f"{sc.name}: barrier functions")
        save(fig, "barrier.svg")

    if sc.filter_mode == "smcbf":
        fig, ax = plt.subplots(figsize=(7, 4))
        for j in range(traj.n_constraints):
            ax.plot(t, traj.s_surface[step, j], lw=0.9, label=f"S{j + 1}")
            phi = sc.constraints[j]["smcbf"]["phi"]
            ax.axhline(phi, color="gray", lw=0.5)
            ax.axhline(-phi, color="gray", lw=0.5)
        ax.set_xlabel("t [s]"), ax.set_ylabel("sliding surface"), ax.legend(fontsize=8)
        ax.set_title(f"{sc.name}: sliding surfaces")
        save(fig, "sliding.svg")

    return written


def safety_violated(metrics: dict) -> bool:
    return any(c["min_h"] < -SAFETY_SLACK for c in metrics["constraints"])


def run_experiment(
    scenario: Scenario,
    out_dir: Path,
    plot: bool = False,
    experiment_id: str | None = None,
    config_path: str | None = None,
) -> tuple[TrajectoryLog, dict, int]:
    """Run one scenario, write artifacts, return (log, metrics, exit code)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    traj = run_closed_loop(scenario)
    metrics = compute_metrics(traj)

    csv_path = out_dir / "trajectory.csv"
    write_trajectory_csv(traj, csv_path)
    metrics_path = out_dir / "metrics.json"
    metrics_path.write_text(json.dumps(metrics, indent=2) + "\n")

    artifacts = [csv_path, metrics_path]
    if plot:
        artifacts += write_plots(traj, out_dir)

    manifest = {
        "experiment": experiment_id,
        "config_path": config_path,
        "scenario": scenario.to_dict(),
        "artifacts": {p.name: _sha256(p) for p in artifacts},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    code = 0
    if scenario.promises_safety and safety_violated(metrics):
        code = 2
    return traj, metrics, code


def list_experiments() -> list[tuple[str, str]]:
    return [(eid, experiments.DESCRIPTIONS[eid]) for eid in experiments.experiment_ids()]


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    updates = {}
    if args.dt is not None:
        updates["dt"] = args.dt
    if args.duration is not None:
        updates["duration"] = args.duration
    if args.perturb:
        scales = dict(scenario.perturb_scales)
        for item in args.perturb:
            if "=" not in item:
                raise ConfigError(f"--perturb expects field=scale, got {item!r}")
            name, _, value = item.partition("=")
            try:
                scales[name.strip()] = float(value)
            except ValueError:
                raise ConfigError(f"--perturb scale for {name!r} is not a number") from None
        updates["perturb_scales"] = scales
    if not updates:
        return scenario
    return dataclasses.replace(scenario, **updates)


def _resolve_scenario(args) -> tuple[Scenario, str | None, str | None]:
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config parse error in {args.config} at line {exc.lineno}, "
                f"column {exc.colno}: {exc.msg}"
            ) from None
        return Scenario.from_dict(raw), None, args.config
    if args.experiment is None:
        raise ConfigError("give an experiment id or --config PATH (see 'safectrl list')")
    try:
        scenario = experiments.build_experiment(args.experiment)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    return scenario, args.experiment, None


def _cmd_run(args) -> int:
    out_root = Path(args.out)
    if args.all:
        worst = 0
        for eid in experiments.experiment_ids():
            scenario = _apply_overrides(experiments.build_experiment(eid), args)
            _, metrics, code = run_experiment(
                scenario, out_root / eid, plot=args.plot, experiment_id=eid
            )
            print(f"{eid}: exit {code}, min_h "
                  f"{[c['min_h'] for c in metrics['constraints']]}")
            worst = 1 if code == 1 or worst == 1 else max(worst, code)
        return worst

    scenario, eid, config_path = _resolve_scenario(args)
    scenario = _apply_overrides(scenario, args)
    _, metrics, code = run_experiment(
        scenario, out_root, plot=args.plot,
        experiment_id=eid, config_path=config_path,
    )
    print(f"{scenario.name}: wrote {out_root}/trajectory.csv, metrics.json, manifest.json")
    for j, c in enumerate(metrics["constraints"]):
        print(f"  constraint {j + 1}: min_h={c['min_h']:.3e} "
              f"violations={len(c['violation_intervals'])}")
    if code == 2:
        print("SAFETY VIOLATION in a scenario that promises safety", file=sys.stderr)
    return code


def _cmd_list(_args) -> int:
    rows = list_experiments()
    width = max(len(eid) for eid, _ in rows)
    for eid, desc in rows:
        print(f"{eid:<{width}}  {desc}")
    return 0


def _cmd_dump_config(args) -> int:
    scenario = experiments.build_experiment(args.experiment)
    text = json.dumps(scenario.to_dict(), indent=2) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safectrl",
        description="QP-based safety-filter experiments on the pendulum and levitation rigs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment or a scenario file")
    p_run.add_argument("experiment", nargs="?", help="built-in experiment id")
    p_run.add_argument("--config", help="scenario JSON file (instead of an id)")
    p_run.add_argument("--out", default="results", help="output directory")
    p_run.add_argument("--dt", type=float, help="override integration step [s]")
    p_run.add_argument("--duration", type=float, help="override duration [s]")
    p_run.add_argument("--perturb", action="append", metavar="FIELD=SCALE",
                       help="scale a plant parameter of the real dynamics")
    p_run.add_argument("--plot", action="store_true", help="write SVG plots")
    p_run.add_argument("--all", action="store_true",
                       help="run every built-in experiment into OUT/<id>/")
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list", help="list built-in experiments")
    p_list.set_defaults(func=_cmd_list)

    p_dump = sub.add_parser("dump-config", help="print a built-in scenario as JSON")
    p_dump.add_argument("experiment")
    p_dump.add_argument("--out", default="-", help="output file (default stdout)")
    p_dump.set_defaults(func=_cmd_dump_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
