"""Deterministic fixed-step closed-loop simulation.

Each step evaluates the references, the nominal control law and (when
enabled) the barrier constraints, solves the safety-filter QP, applies the
plant-side input clamps and advances the *perturbed* plant one RK4 step
under zero-order hold.  All controller-side quantities (linearization, Lie
derivatives, nominal output dynamics) use the nominal parameters: this
model/plant split is what the robustness experiments probe.

Identical scenarios produce bitwise-identical logs: the loop is pure
floating-point arithmetic with no randomness or wall-clock dependence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields

import numpy as np

from . import barrier as bar
from . import nominal
from . import plants
from . import qp as qpmod
from .plants import furuta as fur
from .plants import maglev as mag

log = logging.getLogger(__name__)

PLANTS = ("furuta", "maglev")
CONTROLLERS = {"furuta": "lqr", "maglev": "smc"}
FILTER_MODES = ("none", "ecbf", "smcbf")
STATE_DIMS = {"furuta": 4, "maglev": 6}
OUTPUT_DIMS = {"furuta": 2, "maglev": 3}
INPUT_DIMS = {"furuta": 1, "maglev": 3}

# Integer codes for the QP status column (CSV-friendly).
QP_NOT_SOLVED = -1
QP_STATUS_CODES = {
    qpmod.CONVERGED: 0,
    qpmod.MAX_ITERATIONS: 1,
    qpmod.INFEASIBLE: 2,
}


class ConfigError(ValueError):
    """Scenario configuration problem; the message names the field."""


class SimulationError(RuntimeError):
    """Integration aborted (non-finite state); message carries a state dump."""


def _normalize(obj):
    """Canonical scenario leaf types: floats, bools, strs, tuples, dicts."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (int, float)):
        return float(obj)
    if isinstance(obj, str) or obj is None:
        return obj
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return tuple(_normalize(v) for v in obj)
    raise ConfigError(f"unsupported config value {obj!r}")


@dataclass(frozen=True)
class ReferenceSpec:
    """Deterministic reference signal for one channel.

    kinds: ``constant`` (value), ``square`` (alternates +/- amplitude each
    half period, starting positive), ``pulses`` (amplitude over
    [t_i, t_i + width), else value), ``steps`` (piecewise constant: values[i]
    from times[i] on, value before the first time).
    """

    kind: str
    value: float = 0.0
    amplitude: float = 0.0
    period: float = 0.0
    width: float = 0.0
    times: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", str(self.kind))
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "period", float(self.period))
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind not in ("constant", "square", "pulses", "steps"):
            raise ConfigError(f"reference kind {self.kind!r} unknown")
        if self.kind == "square" and self.period <= 0.0:
            raise ConfigError("square reference: period must be > 0")
        if self.kind == "pulses":
            if self.width <= 0.0:
                raise ConfigError("pulse reference: width must be > 0")
            if any(b < a for a, b in zip(self.times, self.times[1:])):
                raise ConfigError("pulse reference: times must be sorted")
        if self.kind == "steps":
            if len(self.times) != len(self.values):
                raise ConfigError("step reference: times and values lengths differ")
            if any(b < a for a, b in zip(self.times, self.times[1:])):
                raise ConfigError("step reference: times must be sorted")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "constant":
            out["value"] = self.value
        elif self.kind == "square":
            out.update(amplitude=self.amplitude, period=self.period)
        elif self.kind == "pulses":
            out.update(
                amplitude=self.amplitude, width=self.width,
                times=list(self.times), value=self.value,
            )
        else:
            out.update(times=list(self.times), values=list(self.values), value=self.value)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceSpec":
        if not isinstance(d, dict) or "kind" not in d:
            raise ConfigError("reference entries must be objects with a 'kind'")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"reference has unknown fields {sorted(unknown)}")
        return cls(**d)


def generate_reference(spec: ReferenceSpec, t: float) -> float:
    """Evaluate a reference channel at time t >= 0."""
    if spec.kind == "constant":
        return spec.value
    if spec.kind == "square":
        return spec.amplitude if (t % spec.period) < 0.5 * spec.period else -spec.amplitude
    if spec.kind == "pulses":
        for t0 in spec.times:
            if t0 <= t < t0 + spec.width:
                return spec.amplitude
        return spec.value
    # steps
    level = spec.value
    for t0, v in zip(spec.times, spec.values):
        if t >= t0:
            level = v
        else:
            break
    return level


@dataclass(frozen=True)
class Scenario:
    """Complete, serializable description of one closed-loop run."""

    name: str
    plant: str                      # "furuta" | "maglev"
    plant_params: dict              # absolute overrides of the catalog values
    perturb_scales: dict            # multiplicative scales applied to the real plant
    controller: str                 # "lqr" | "smc"
    controller_config: dict
    filter_mode: str                # "none" | "ecbf" | "smcbf"
    constraints: tuple              # per-constraint config dicts
    references: tuple               # one ReferenceSpec per reference channel
    x0: tuple
    dt: float
    duration: float
    barrier_enable_time: float = 0.0
    promises_safety: bool = False

    def __post_init__(self):
        object.__setattr__(self, "plant_params", _normalize(self.plant_params))
        object.__setattr__(self, "perturb_scales", _normalize(self.perturb_scales))
        object.__setattr__(self, "controller_config", _normalize(self.controller_config))
        object.__setattr__(self, "constraints", _normalize(tuple(self.constraints)))
        refs = tuple(
            r if isinstance(r, ReferenceSpec) else ReferenceSpec.from_dict(r)
            for r in self.references
        )
        object.__setattr__(self, "references", refs)
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "duration", float(self.duration))
        object.__setattr__(self, "barrier_enable_time", float(self.barrier_enable_time))

        if self.plant not in PLANTS:
            raise ConfigError(f"plant must be one of {PLANTS}, got {self.plant!r}")
        if self.controller != CONTROLLERS[self.plant]:
            raise ConfigError(
                f"controller {self.controller!r} does not drive plant {self.plant!r}"
            )
        if self.filter_mode not in FILTER_MODES:
            raise ConfigError(f"filter_mode must be one of {FILTER_MODES}")
        if self.dt <= 0.0:
            raise ConfigError("dt must be > 0")
        if self.duration < self.dt:
            raise ConfigError("duration must be >= dt")
        if not 0.0 <= self.barrier_enable_time <= self.duration:
            raise ConfigError("barrier_enable_time must lie in [0, duration]")
        if len(self.x0) != STATE_DIMS[self.plant]:
            raise ConfigError(
                f"x0 must have {STATE_DIMS[self.plant]} entries for {self.plant}"
            )
        if len(self.references) != OUTPUT_DIMS[self.plant]:
            raise ConfigError(
                f"{self.plant} needs {OUTPUT_DIMS[self.plant]} reference channels"
            )
        if self.filter_mode != "none" and not self.constraints:
            raise ConfigError("filter_mode set but no constraints configured")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "plant": self.plant,
            "plant_params": dict(self.plant_params),
            "perturb_scales": dict(self.perturb_scales),
            "controller": self.controller,
            "controller_config": _to_jsonable(self.controller_config),
            "filter_mode": self.filter_mode,
            "constraints": [_to_jsonable(c) for c in self.constraints],
            "references": [r.to_dict() for r in self.references],
            "x0": list(self.x0),
            "dt": self.dt,
            "duration": self.duration,
            "barrier_enable_time": self.barrier_enable_time,
            "promises_safety": self.promises_safety,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ConfigError("scenario config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields {sorted(unknown)}")
        missing = [
            name for name in ("name", "plant", "controller", "filter_mode",
                              "references", "x0", "dt", "duration")
            if name not in d
        ]
        if missing:
            raise ConfigError(f"scenario config missing required fields {missing}")
        d = dict(d)
        d["references"] = tuple(
            ReferenceSpec.from_dict(r) if not isinstance(r, ReferenceSpec) else r
            for r in d["references"]
        )
        d.setdefault("plant_params", {})
        d.setdefault("perturb_scales", {})
        d.setdefault("controller_config", {})
        d.setdefault("constraints", ())
        return cls(**d)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, tuple):
        return [_to_jsonable(v) for v in obj]
    return obj


@dataclass
class TrajectoryLog:
    """Columnar per-step record of one run.

    All arrays share the leading dimension len(t) = n_steps + 1 (one row per
    control step plus the final state, with controls evaluated there too).
    Surface and bound columns are NaN where the active policy defines none.
    """

    scenario: Scenario
    t: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    references: np.ndarray
    u_nominal: np.ndarray
    u_filtered: np.ndarray
    u_applied: np.ndarray
    h: np.ndarray
    h_dot: np.ndarray
    s_surface: np.ndarray
    mu_lo: np.ndarray
    constraint_active: np.ndarray
    qp_status: np.ndarray
    qp_iterations: np.ndarray
    qp_fallback: np.ndarray
    clamp_hit: np.ndarray

    @property
    def n_constraints(self) -> int:
        return self.h.shape[1]

    def enabled_slice(self) -> np.ndarray:
        """Boolean mask of samples at or after the barrier enable time."""
        return self.t >= self.scenario.barrier_enable_time - 0.5 * self.scenario.dt


def rk4_step(deriv, x: np.ndarray, u, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step with the input held constant."""
    k1 = deriv(x, u)
    k2 = deriv(x + 0.5 * dt * k1, u)
    k3 = deriv(x + 0.5 * dt * k2, u)
    k4 = deriv(x + dt * k3, u)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise SimulationError(
            f"non-finite state after step from x={np.asarray(x).tolist()} "
            f"with u={np.asarray(u).tolist()}"
        )
    return x_next


class _FurutaLoop:
    """Per-run controller state for the pendulum scenarios."""

    def __init__(self, scenario: Scenario):
        cfg = scenario.controller_config
        self.p_nom = _build_params("furuta", scenario.plant_params)
        self.p_real = plants.perturb(self.p_nom, scenario.perturb_scales)
        self.A, self.B = fur.furuta_linearize(self.p_nom)
        q_diag = cfg.get("q_diag", (500.0,) * 4)
        r_cost = cfg.get("r", 1.0)
        self.design = nominal.LqrDesign.design(
            self.A, self.B, np.diag(q_diag), np.array([[r_cost]])
        )
        self.theta1_max = [float(c["theta1_max"]) for c in scenario.constraints]
        self.policies = _build_policies(scenario)

    def nominal_input(self, x, refs):
        return nominal.lqr_control(self.design, x, refs[0], refs[1])

    def outputs(self, x):
        return np.array([x[fur.TH0], x[fur.TH1]])

    def barrier_evaluations(self, x):
        return [
            fur.furuta_barrier(x, tm, self.A, self.B) for tm in self.theta1_max
        ]

    def clamp(self, u):
        return np.clip(u, -1.0, 1.0)

    def derivative(self, x, u):
        return fur.furuta_dynamics(x, float(u[0]), self.p_real)


class _MaglevLoop:
    """Per-run controller state for the levitation scenarios."""

    def __init__(self, scenario: Scenario):
        cfg = scenario.controller_config
        self.p_nom = _build_params("maglev", scenario.plant_params)
        self.p_real = plants.perturb(self.p_nom, scenario.perturb_scales)
        for key in ("lambda", "eta", "phi", "switching_gain"):
            if key not in cfg:
                raise ConfigError(f"controller_config.{key} is required for the smc controller")
        self.design = nominal.SmcTrackingDesign(
            lam=cfg["lambda"], eta=cfg["eta"],
            boundary_layer=cfg["phi"], switching_gain=cfg["switching_gain"],
        )
        self.r_max = [float(c["r_max"]) for c in scenario.constraints]
        self.setpoints = [float(c["setpoint"]) for c in scenario.constraints]
        self.policies = _build_policies(scenario)
        self._zero3 = np.zeros(3)

    def measure(self, x):
        # Gap sensors read the actual plate; the model matrices are nominal.
        r = mag.maglev_output(x, self.p_real)
        r_dot = mag.maglev_output_rate(x, self.p_real)
        f_nom, g_nom = mag.maglev_output_dynamics(x, self.p_nom)
        return r, r_dot, f_nom, g_nom

    def nominal_input(self, measured, refs):
        r, r_dot, f_nom, g_nom = measured
        return nominal.smc_tracking_control(
            self.design, r, r_dot, f_nom, g_nom,
            np.asarray(refs), self._zero3, self._zero3,
        )

    def barrier_evaluations(self, x, measured):
        return [
            mag.maglev_barrier(x, j, self.r_max[j], self.setpoints[j],
                               self.p_nom, outputs=measured)
            for j in range(len(self.r_max))
        ]

    def clamp(self, u):
        return np.maximum(u, 0.0)

    def derivative(self, x, u):
        return mag.maglev_dynamics(x, u, self.p_real)


def _build_params(plant: str, overrides: dict):
    base = fur.nominal_furuta_params() if plant == "furuta" else mag.nominal_maglev_params()
    if not overrides:
        return base
    import dataclasses as _dc

    valid = {f.name for f in _dc.fields(base)}
    bad = set(overrides) - valid
    if bad:
        raise ConfigError(f"plant_params has unknown fields {sorted(bad)}")
    return _dc.replace(base, **overrides)


def _build_policies(scenario: Scenario):
    """One enforcement policy per constraint, matching the filter mode."""
    mode = scenario.filter_mode
    policies = []
    for i, c in enumerate(scenario.constraints):
        if mode == "ecbf":
            if "ecbf_gain" not in c:
                raise ConfigError(f"constraints[{i}].ecbf_gain is required for ecbf mode")
            policies.append(bar.EcbfPolicy(np.asarray(c["ecbf_gain"])))
        elif mode == "smcbf":
            if "smcbf" not in c:
                raise ConfigError(f"constraints[{i}].smcbf is required for smcbf mode")
            s = c["smcbf"]
            try:
                if "switching_gain" in s:
                    policies.append(bar.SmcbfPolicy(
                        lam=s["lambda"], eta=s["eta"],
                        switching_gain=s["switching_gain"],
                        boundary_layer=s["phi"], h_setpoint=s["h_setpoint"],
                        delta_max=s["delta_max"],
                    ))
                else:
                    policies.append(bar.SmcbfPolicy.from_uncertainty(
                        s["lambda"], s["eta"], s["phi"], s["h_setpoint"], s["delta_max"],
                    ))
            except KeyError as exc:
                raise ConfigError(f"constraints[{i}].smcbf missing field {exc}") from None
        else:
            policies.append(None)
    return policies


def run_closed_loop(scenario: Scenario) -> TrajectoryLog:
    """Simulate one scenario and log every step (deterministic)."""
    loop = _FurutaLoop(scenario) if scenario.plant == "furuta" else _MaglevLoop(scenario)
    n = scenario.n_steps
    dt = scenario.dt
    kc = len(scenario.constraints)
    m = INPUT_DIMS[scenario.plant]
    p_out = OUTPUT_DIMS[scenario.plant]

    t_arr = np.arange(n + 1) * dt
    states = np.zeros((n + 1, STATE_DIMS[scenario.plant]))
    outputs = np.zeros((n + 1, p_out))
    refs_arr = np.zeros((n + 1, p_out))
    u_nom = np.zeros((n + 1, m))
    u_fil = np.zeros((n + 1, m))
    u_app = np.zeros((n + 1, m))
    h_arr = np.full((n + 1, kc), np.nan)
    hdot_arr = np.full((n + 1, kc), np.nan)
    s_arr = np.full((n + 1, kc), np.nan)
    mulo_arr = np.full((n + 1, kc), np.nan)
    active_arr = np.zeros((n + 1, kc), dtype=bool)
    status_arr = np.full(n + 1, QP_NOT_SOLVED, dtype=np.int64)
    iters_arr = np.zeros(n + 1, dtype=np.int64)
    fallback_arr = np.zeros(n + 1, dtype=bool)
    clamp_arr = np.zeros(n + 1, dtype=bool)

    mode = scenario.filter_mode
    enable = scenario.barrier_enable_time - 0.5 * dt
    qp_tol = float(scenario.controller_config.get("qp_tol", qpmod.DEFAULT_TOL))
    qp_max_iter = int(scenario.controller_config.get("qp_max_iter", qpmod.DEFAULT_MAX_ITER))
    warned_infeasible = False

    x = np.array(scenario.x0, dtype=float)
    for i in range(n + 1):
        t = t_arr[i]
        refs = [generate_reference(r, t) for r in scenario.references]
        if scenario.plant == "furuta":
            u_no = loop.nominal_input(x, refs)
            evs = loop.barrier_evaluations(x) if kc else []
            out = loop.outputs(x)
        else:
            measured = loop.measure(x)
            u_no = loop.nominal_input(measured, refs)
            evs = loop.barrier_evaluations(x, measured) if kc else []
            out = measured[0]

        rows: list[bar.LinearInputConstraint] = []
        row_index: list[int] = []
        for j, ev in enumerate(evs):
            h_arr[i, j] = ev.h
            hdot_arr[i, j] = ev.h_derivs[1] if ev.relative_degree > 1 else np.nan
            policy = loop.policies[j]
            if isinstance(policy, bar.SmcbfPolicy):
                s_arr[i, j] = bar.sliding_surface(ev, policy)
                mulo_arr[i, j] = bar.smcbf_virtual_bound(ev, policy)
                con = bar.smcbf_constraint(ev, policy)
            elif isinstance(policy, bar.EcbfPolicy):
                mulo_arr[i, j] = -float(policy.gain @ ev.h_derivs)
                con = bar.ecbf_constraint(ev, policy)
            else:
                continue
            rows.append(con)
            row_index.append(j)

        u_f = u_no
        if mode != "none" and t >= enable and rows:
            kept_pairs = []
            infeasible_degenerate = False
            for j, con in zip(row_index, rows):
                if con.degenerate:
                    if con.bound > 0.0:
                        infeasible_degenerate = True
                else:
                    kept_pairs.append((j, con))
            if infeasible_degenerate:
                fallback_arr[i] = True
                if not warned_infeasible:
                    log.warning(
                        "%s: degenerate infeasible barrier row at t=%.4f; "
                        "nominal input passed through", scenario.name, t,
                    )
                    warned_infeasible = True
            if kept_pairs and not infeasible_degenerate:
                problem = bar.assemble_filter_qp(u_no, [c for _, c in kept_pairs])
                sol = qpmod.solve_hildreth(problem, tol=qp_tol, max_iter=qp_max_iter)
                status_arr[i] = QP_STATUS_CODES[sol.status]
                iters_arr[i] = sol.iterations
                if sol.converged:
                    u_f = sol.u_star
                    for (j, _), lam in zip(kept_pairs, sol.multipliers):
                        active_arr[i, j] = lam > 1e-10
                else:
                    fallback_arr[i] = True
                    if not warned_infeasible:
                        log.warning(
                            "%s: QP %s at t=%.4f; nominal input passed through",
                            scenario.name, sol.status, t,
                        )
                        warned_infeasible = True

        u_a = loop.clamp(u_f)
        states[i] = x
        outputs[i] = out
        refs_arr[i] = refs
        u_nom[i] = u_no
        u_fil[i] = u_f
        u_app[i] = u_a
        clamp_arr[i] = bool(np.any(u_a != u_f))

        if i < n:
            x = rk4_step(loop.derivative, x, u_a, dt)

    return TrajectoryLog(
        scenario=scenario, t=t_arr, states=states, outputs=outputs,
        references=refs_arr, u_nominal=u_nom, u_filtered=u_fil, u_applied=u_app,
        h=h_arr, h_dot=hdot_arr, s_surface=s_arr, mu_lo=mulo_arr,
        constraint_active=active_arr, qp_status=status_arr,
        qp_iterations=iters_arr, qp_fallback=fallback_arr, clamp_hit=clamp_arr,
    )


def _violation_intervals(t: np.ndarray, bad: np.ndarray) -> list[list[float]]:
    """Contiguous runs of True as [t_start, t_end] pairs."""
    intervals = []
    start = None
    for i, flag in enumerate(bad):
        if flag and start is None:
            start = t[i]
        elif not flag and start is not None:
            intervals.append([float(start), float(t[i - 1])])
            start = None
    if start is not None:
        intervals.append([float(start), float(t[-1])])
    return intervals


def compute_metrics(traj: TrajectoryLog) -> dict:
    """Summary statistics backing the experiment claims.

    Per constraint: min h and the deviation extreme over the enabled window,
    violation intervals (h < 0), and for sliding-mode policies the discrete
    sliding-condition report restricted to steps where the constraint was
    enforced.  Tracking RMS errors cover the full run.
    """
    if traj.t.size == 0:
        raise ValueError("empty log")
    scenario = traj.scenario
    sel = traj.enabled_slice()
    t_sel = traj.t[sel]

    constraints = []
    for j in range(traj.n_constraints):
        h = traj.h[sel, j]
        cfg = scenario.constraints[j]
        if scenario.plant == "furuta":
            deviation = traj.states[sel, fur.TH1]
        else:
            deviation = traj.outputs[sel, j] - cfg["setpoint"]
        entry = {
            "min_h": float(np.min(h)),
            "max_abs_deviation": float(np.max(np.abs(deviation))),
            "violation_steps": int(np.sum(h < 0.0)),
            "violation_intervals": _violation_intervals(t_sel, h < 0.0),
            "sliding": None,
        }
        if scenario.filter_mode == "smcbf":
            smcbf_cfg = cfg["smcbf"]
            report = bar.check_sliding_condition(
                traj.s_surface[sel, j],
                eta=smcbf_cfg["eta"],
                boundary_layer=smcbf_cfg["phi"],
                dt=scenario.dt,
                mask=traj.constraint_active[sel, j],
            )
            entry["sliding"] = {
                "max_residual": report.max_residual if report.checked_count else None,
                "violation_count": report.violation_count,
                "checked_count": report.checked_count,
            }
        constraints.append(entry)

    err = traj.outputs - traj.references
    rms = np.sqrt(np.mean(err**2, axis=0))
    return {
        "scenario": scenario.name,
        "plant": scenario.plant,
        "filter_mode": scenario.filter_mode,
        "enable_time": scenario.barrier_enable_time,
        "duration": scenario.duration,
        "dt": scenario.dt,
        "constraints": constraints,
        "tracking_rms_error": [float(v) for v in rms],
        "qp_fallback_steps": int(np.sum(traj.qp_fallback)),
        "clamp_hit_steps": int(np.sum(traj.clamp_hit)),
        "final_state": [float(v) for v in traj.states[-1]],
    }
