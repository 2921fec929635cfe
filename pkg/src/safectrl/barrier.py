"""Barrier constraints and the QP safety filter around a nominal input.

A safety requirement is a scalar function h(x) that must stay nonnegative.
For relative degree r the input appears in the r-th derivative,

    h^(r) = Lf^r h(x) + Lg Lf^(r-1) h(x) u =: mu,

so any lower bound ``mu >= mu_lo`` on this virtual input translates into one
linear inequality in the physical input u,

    (Lg Lf^(r-1) h) u  >=  mu_lo - Lf^r h.

Three enforcement policies produce the bound mu_lo:

* plain relative-degree-one condition  mu_lo = -alpha * h  (``cbf_constraint_r1``),
* exponential barrier with companion-form gain K, mu_lo = -K @ [h, h', ...]
  (``ecbf_constraint``), designed by pole placement,
* sliding-mode barrier robust against bounded model error: the surface
  S = h' + lam*(h - h_d) is driven by mu_lo = -lam*h' - K_smc*sat(S/Phi),
  with a boundary layer Phi replacing the sign function to suppress
  chattering (``smcbf_constraint``).

The virtual input is eliminated analytically rather than kept as a QP
decision variable: the objective penalizes only u, so mu is fixed by the
equality above and the filter reduces to a pure inequality QP
(``assemble_filter_qp``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qp import QpProblem

# Rows whose coefficient vector is below this are treated as degenerate:
# the input has no instantaneous authority over the constraint.
DEGENERATE_ROW_TOL = 1e-12


@dataclass(frozen=True)
class BarrierEvaluation:
    """h and its Lie-derivative chain at one state, up to relative degree r.

    ``h_derivs`` is [h, h', ..., h^(r-1)]; ``lie_f_r`` is Lf^r h and
    ``lie_g_lie_f`` the input row Lg Lf^(r-1) h (length = number of inputs).
    """

    h: float
    h_derivs: np.ndarray
    lie_f_r: float
    lie_g_lie_f: np.ndarray

    def __post_init__(self):
        hd = np.asarray(self.h_derivs, dtype=float).ravel()
        row = np.asarray(self.lie_g_lie_f, dtype=float).ravel()
        if hd.size < 1:
            raise ValueError("h_derivs must contain at least h itself")
        if abs(hd[0] - self.h) > 1e-12 * max(1.0, abs(self.h)):
            raise ValueError("h_derivs[0] must equal h")
        object.__setattr__(self, "h_derivs", hd)
        object.__setattr__(self, "lie_g_lie_f", row)

    @property
    def relative_degree(self) -> int:
        return self.h_derivs.size


@dataclass(frozen=True)
class LinearInputConstraint:
    """One half-space in the input: ``row @ u >= bound``."""

    row: np.ndarray
    bound: float

    def __post_init__(self):
        row = np.asarray(self.row, dtype=float).ravel()
        if not (np.all(np.isfinite(row)) and math.isfinite(self.bound)):
            raise ValueError("constraint entries must be finite")
        object.__setattr__(self, "row", row)

    def satisfied_by(self, u: np.ndarray, slack: float = 0.0) -> bool:
        return float(self.row @ np.asarray(u, dtype=float)) >= self.bound - slack

    @property
    def degenerate(self) -> bool:
        return float(np.max(np.abs(self.row), initial=0.0)) < DEGENERATE_ROW_TOL


@dataclass(frozen=True)
class EcbfPolicy:
    """Companion-form gain row for an exponential barrier constraint.

    ``gain`` is [a0, a1, ..., a_{r-1}]: the closed-loop characteristic
    polynomial of the h-chain is s^r + a_{r-1} s^(r-1) + ... + a0, which must
    be Hurwitz.
    """

    gain: np.ndarray

    def __post_init__(self):
        gain = np.asarray(self.gain, dtype=float).ravel()
        if gain.size < 1:
            raise ValueError("gain must have at least one entry")
        object.__setattr__(self, "gain", gain)
        eig = np.linalg.eigvals(self.closed_loop_matrix())
        if np.any(eig.real >= 0.0):
            raise ValueError(f"gain {gain} is not stabilizing: eigenvalues {eig}")

    @property
    def relative_degree(self) -> int:
        return self.gain.size

    def closed_loop_matrix(self) -> np.ndarray:
        """F - G K for the companion pair driving the h-chain."""
        r = self.gain.size
        F = np.eye(r, k=1)
        A = F.copy()
        A[-1, :] -= self.gain
        return A


def pole_placement_gain(poles) -> EcbfPolicy:
    """Gain placing the h-chain closed-loop poles at -p for each p in poles.

    All poles must be strictly positive reals (the closed loop gets the
    negated values).  The gain is the coefficient vector of prod(s + p_i)
    without the leading 1, lowest order first.
    """
    poles = np.asarray(poles, dtype=float).ravel()
    if poles.size < 1 or poles.size > 3:
        raise ValueError("supported relative degrees are 1..3")
    if np.any(poles <= 0.0):
        raise ValueError(f"poles must be strictly positive, got {poles}")
    coeffs = np.poly(-poles)          # descending, leading 1
    gain = coeffs[1:][::-1]           # [a0, ..., a_{r-1}]
    return EcbfPolicy(np.ascontiguousarray(gain))


@dataclass(frozen=True)
class SmcbfPolicy:
    """Sliding-mode enforcement parameters for one barrier constraint.

    ``switching_gain`` must dominate the modeling-error bound plus the
    reaching margin (K >= delta_max + eta); ``boundary_layer`` must be
    positive, and then the setpoint has to sit strictly inside the safe set
    (h_setpoint > 0) because inside the layer h only converges to a
    neighborhood of the setpoint.
    """

    lam: float               # surface slope, 1/s
    eta: float               # reaching margin of the sliding condition
    switching_gain: float    # K_smc
    boundary_layer: float    # Phi
    h_setpoint: float        # h_d, constant per scenario
    delta_max: float         # assumed bound on the model-error term

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")
        if self.boundary_layer <= 0.0:
            raise ValueError("boundary_layer must be positive")
        if self.delta_max < 0.0:
            raise ValueError("delta_max must be nonnegative")
        if self.switching_gain < self.delta_max + self.eta - 1e-12:
            raise ValueError(
                f"switching_gain {self.switching_gain} violates the sliding "
                f"condition bound delta_max + eta = {self.delta_max + self.eta}"
            )
        if self.h_setpoint <= 0.0:
            raise ValueError("h_setpoint must be positive with a boundary layer")

    @classmethod
    def from_uncertainty(
        cls, lam: float, eta: float, boundary_layer: float,
        h_setpoint: float, delta_max: float,
    ) -> "SmcbfPolicy":
        """Minimal switching gain K = delta_max + eta (less chattering)."""
        return cls(lam, eta, delta_max + eta, boundary_layer, h_setpoint, delta_max)


def sat(z: float) -> float:
    """Saturation: identity inside [-1, 1], sign outside (z is S/Phi)."""
    if z > 1.0:
        return 1.0
    if z < -1.0:
        return -1.0
    return z


def cbf_constraint_r1(ev: BarrierEvaluation, alpha_gain: float) -> LinearInputConstraint:
    """Relative-degree-one constraint Lg h u + Lf h + alpha*h >= 0."""
    if ev.relative_degree != 1:
        raise ValueError(f"relative degree must be 1, got {ev.relative_degree}")
    if alpha_gain <= 0.0:
        raise ValueError("alpha_gain must be positive")
    return LinearInputConstraint(ev.lie_g_lie_f, -ev.lie_f_r - alpha_gain * ev.h)


def ecbf_constraint(ev: BarrierEvaluation, policy: EcbfPolicy) -> LinearInputConstraint:
    """Exponential-barrier row: (Lg Lf^(r-1) h) u >= -Lf^r h - K @ h_derivs."""
    if policy.relative_degree != ev.relative_degree:
        raise ValueError(
            f"policy degree {policy.relative_degree} != evaluation degree "
            f"{ev.relative_degree}"
        )
    bound = -ev.lie_f_r - float(policy.gain @ ev.h_derivs)
    return LinearInputConstraint(ev.lie_g_lie_f, bound)


def sliding_surface(ev: BarrierEvaluation, policy: SmcbfPolicy) -> float:
    """S = h' + lam * (h - h_setpoint) for a relative-degree-two barrier."""
    if ev.relative_degree != 2:
        raise ValueError("sliding-mode enforcement requires relative degree 2")
    return float(ev.h_derivs[1]) + policy.lam * (ev.h - policy.h_setpoint)


def smcbf_virtual_bound(ev: BarrierEvaluation, policy: SmcbfPolicy) -> float:
    """mu_lo = -lam*h' - K * sat(S/Phi); the setpoint is constant in time."""
    s = sliding_surface(ev, policy)
    mu_eq = -policy.lam * float(ev.h_derivs[1])
    return mu_eq - policy.switching_gain * sat(s / policy.boundary_layer)


def smcbf_constraint(ev: BarrierEvaluation, policy: SmcbfPolicy) -> LinearInputConstraint:
    """Sliding-mode barrier row: (Lg Lf h) u >= mu_lo - Lf^2 h."""
    mu_lo = smcbf_virtual_bound(ev, policy)
    return LinearInputConstraint(ev.lie_g_lie_f, mu_lo - ev.lie_f_r)


def prune_degenerate(
    constraints: list[LinearInputConstraint],
) -> tuple[list[LinearInputConstraint], bool]:
    """Drop rows with (numerically) zero input authority.

    A degenerate row with bound <= 0 is vacuous and removed; one with a
    positive bound cannot be satisfied by any input and is reported through
    the second return value so the caller can fall back to the nominal input.
    """
    kept: list[LinearInputConstraint] = []
    infeasible = False
    for con in constraints:
        if con.degenerate:
            if con.bound > 0.0:
                infeasible = True
            continue
        kept.append(con)
    return kept, infeasible


def assemble_filter_qp(
    u_nominal: np.ndarray, constraints: list[LinearInputConstraint]
) -> QpProblem:
    """QP keeping u close to the nominal input subject to the barrier rows.

    Objective u'u - 2 u_no'u, i.e. H = 2I and c = -2 u_no; with no
    constraints the minimizer is the nominal input itself.
    """
    u_nominal = np.asarray(u_nominal, dtype=float).ravel()
    m = u_nominal.size
    for con in constraints:
        if con.row.size != m:
            raise ValueError(
                f"constraint row width {con.row.size} != input dimension {m}"
            )
    if constraints:
        M = np.vstack([con.row for con in constraints])
        bounds = np.array([con.bound for con in constraints])
    else:
        M = np.zeros((0, m))
        bounds = np.zeros(0)
    return QpProblem(2.0 * np.eye(m), -2.0 * u_nominal, M, bounds)


@dataclass(frozen=True)
class SlidingConditionReport:
    """Discrete check of 0.5 d/dt S^2 <= -eta |S| outside the boundary layer."""

    max_residual: float
    violation_count: int
    checked_count: int

    @property
    def clean(self) -> bool:
        return self.violation_count == 0


def check_sliding_condition(
    s_trace: np.ndarray,
    eta: float,
    boundary_layer: float,
    dt: float,
    mask: np.ndarray | None = None,
) -> SlidingConditionReport:
    """Check the sliding condition on a uniformly sampled surface trace.

    The discrete residual at sample k is ``0.5*(S_{k+1}^2 - S_k^2)/dt +
    eta*|S_k|``; the condition requires it to be nonpositive wherever
    |S_k| > boundary_layer (inside the layer the saturated law makes no
    claim).  ``mask`` optionally restricts the check to samples where the
    sliding law was actually governing (e.g. the constraint was enforced).
    """
    s = np.asarray(s_trace, dtype=float).ravel()
    if s.size < 2:
        raise ValueError("need at least two samples of S")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    outside = np.abs(s[:-1]) > boundary_layer
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).ravel()
        if mask.size != s.size:
            raise ValueError("mask length must match the trace length")
        outside &= mask[:-1]
    residuals = 0.5 * (s[1:] ** 2 - s[:-1] ** 2) / dt + eta * np.abs(s[:-1])
    checked = residuals[outside]
    if checked.size == 0:
        return SlidingConditionReport(float("-inf"), 0, 0)
    return SlidingConditionReport(
        float(np.max(checked)), int(np.sum(checked > 0.0)), int(checked.size)
    )
