"""Rotary inverted pendulum: nonlinear rigid-body model, linearization and
barrier geometry.

Generalized coordinates are the arm angle theta0 and the pendulum angle
theta1 (zero = upright).  The Euler-Lagrange equations reduce to the 2x2
mass-matrix system

    M(theta1) [th0'', th1'']' = rhs(theta, theta', tau)

with

    M11 = I0 + m1 r^2 + m1 l1^2 sin^2(th1)     M12 = m1 r l1 cos(th1)
    M22 = I1 + m1 l1^2
    rhs0 = tau - b0 th0' - 2 m1 l1^2 sin cos th0' th1' + m1 r l1 sin th1'^2
    rhs1 = -b1 th1' + m1 l1^2 sin cos th0'^2 + m1 g l1 sin(th1)

where I0 = m0 (2 l0)^2 / 12 + m0 d^2 and I1 = m1 (2 l1)^2 / 12 (l0, l1 are
half-lengths).  The DC motor converts a duty command in [-1, 1] into torque

    tau = (k_t / r_m) (v_supply * duty - k_e * th0')

i.e. the duty scales the supply voltage and the back EMF opposes the arm
rate.  The equations were derived offline from the Lagrangian and are
guarded by the energy-conservation and finite-difference oracles in the
test suite rather than by runtime symbolic algebra.

State layout: x = [theta0, theta1, theta0', theta1'].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..barrier import BarrierEvaluation

# State indices.
TH0, TH1, W0, W1 = range(4)

# Damping-sensitive entries of the reference linearization
# (d th0''/d th0', d th1''/d th0', d th0''/d th1', d th1''/d th1'),
# used to identify the viscous friction coefficients that the catalog
# parameter list omits.
REFERENCE_DAMPING_ENTRIES = (-0.1446, 0.2200, 0.0003, -0.0015)


@dataclass(frozen=True)
class FurutaParams:
    """Physical parameters; l0, l1 are half-lengths of arm and pendulum."""

    m0: float          # arm mass, kg
    m1: float          # pendulum mass, kg
    l0: float          # arm half-length, m
    l1: float          # pendulum half-length, m
    r: float           # fixed axis to pendulum base, m
    d: float           # arm center of mass offset from the fixed axis, m
    g: float           # m/s^2
    k_t: float         # motor torque constant, N m / A
    k_e: float         # back EMF constant, V s / rad
    r_m: float         # armature resistance, ohm
    b0: float          # arm-side viscous damping, N m s / rad
    b1: float          # pendulum-side viscous damping, N m s / rad
    v_supply: float    # armature supply voltage scaled by the duty command, V

    def __post_init__(self):
        for name in ("m0", "m1", "l0", "l1", "r", "g", "r_m", "v_supply"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.b0 < 0.0 or self.b1 < 0.0:
            raise ValueError("damping coefficients must be nonnegative")

    @property
    def arm_inertia(self) -> float:
        return self.m0 * (2.0 * self.l0) ** 2 / 12.0 + self.m0 * self.d**2

    @property
    def pendulum_inertia(self) -> float:
        return self.m1 * (2.0 * self.l1) ** 2 / 12.0

    @property
    def duty_torque_gain(self) -> float:
        """Torque per unit duty command: k_t * v_supply / r_m."""
        return self.k_t * self.v_supply / self.r_m


def fit_viscous_damping(
    m0: float, m1: float, l0: float, l1: float, r: float, d: float,
    k_t: float, k_e: float, r_m: float,
    damping_entries: tuple[float, float, float, float] = REFERENCE_DAMPING_ENTRIES,
) -> tuple[float, float]:
    """Identify (b0, b1) from the rate-derivative entries of a linearization.

    With the mass matrix M0 at the upright equilibrium, the linearized rate
    block is -M0^-1 diag(b0 + k_t k_e / r_m, b1); each target entry is
    therefore linear in exactly one unknown, and the two unknowns are fitted
    by least squares to their two entries each.
    """
    i0 = m0 * (2.0 * l0) ** 2 / 12.0 + m0 * d**2
    i1 = m1 * (2.0 * l1) ** 2 / 12.0
    m11 = i0 + m1 * r**2
    m12 = m1 * r * l1
    m22 = i1 + m1 * l1**2
    det = m11 * m22 - m12**2
    t_00, t_10, t_01, t_11 = damping_entries
    # coefficients of D11 in (A_00, A_10) and of b1 in (A_01, A_11)
    c00, c10 = -m22 / det, m12 / det
    c01, c11 = m12 / det, -m11 / det
    d11 = (c00 * t_00 + c10 * t_10) / (c00**2 + c10**2)
    b1 = (c01 * t_01 + c11 * t_11) / (c01**2 + c11**2)
    b0 = d11 - k_t * k_e / r_m
    if b0 < 0.0 or b1 < 0.0:
        raise ValueError(
            f"identified damping is unphysical: b0={b0:.3e}, b1={b1:.3e}"
        )
    return b0, b1


def nominal_furuta_params() -> FurutaParams:
    """Catalog parameters of the bench rig.

    The viscous friction pair is not part of the catalog list; it is
    identified from the reference linearization (see fit_viscous_damping).
    The supply voltage reproduces the reference input matrix: the motor
    equation's duty command scales a 12 V armature supply.
    """
    m0, m1 = 0.393, 0.068
    l0, l1 = 0.365 / 2.0, 0.207 / 2.0
    r, d = 0.210, 0.022
    k_t, k_e, r_m = 0.02, 0.08, 2.4
    b0, b1 = fit_viscous_damping(m0, m1, l0, l1, r, d, k_t, k_e, r_m)
    return FurutaParams(
        m0=m0, m1=m1, l0=l0, l1=l1, r=r, d=d, g=9.81,
        k_t=k_t, k_e=k_e, r_m=r_m, b0=b0, b1=b1, v_supply=12.0,
    )


def motor_torque(duty: float, arm_rate: float, p: FurutaParams) -> float:
    """Armature torque for a duty command in [-1, 1] (clamped here)."""
    duty = min(1.0, max(-1.0, duty))
    return (p.k_t / p.r_m) * (p.v_supply * duty - p.k_e * arm_rate)


def furuta_dynamics(x: np.ndarray, duty: float, p: FurutaParams) -> np.ndarray:
    """State derivative of the full nonlinear model under a duty command."""
    th1 = x[TH1]
    w0 = x[W0]
    w1 = x[W1]
    s1 = math.sin(th1)
    c1 = math.cos(th1)

    m11 = p.arm_inertia + p.m1 * p.r**2 + p.m1 * p.l1**2 * s1 * s1
    m12 = p.m1 * p.r * p.l1 * c1
    m22 = p.pendulum_inertia + p.m1 * p.l1**2
    det = m11 * m22 - m12 * m12
    if det <= 0.0:
        raise ValueError("mass matrix is singular; parameters are unphysical")

    tau = motor_torque(duty, w0, p)
    rhs0 = (
        tau
        - p.b0 * w0
        - 2.0 * p.m1 * p.l1**2 * s1 * c1 * w0 * w1
        + p.m1 * p.r * p.l1 * s1 * w1 * w1
    )
    rhs1 = -p.b1 * w1 + p.m1 * p.l1**2 * s1 * c1 * w0 * w0 + p.m1 * p.g * p.l1 * s1

    acc0 = (m22 * rhs0 - m12 * rhs1) / det
    acc1 = (m11 * rhs1 - m12 * rhs0) / det
    return np.array([w0, w1, acc0, acc1])


def furuta_energy(x: np.ndarray, p: FurutaParams) -> float:
    """Total mechanical energy (kinetic of arm and pendulum plus potential)."""
    th1 = x[TH1]
    w0 = x[W0]
    w1 = x[W1]
    s1 = math.sin(th1)
    c1 = math.cos(th1)
    k_arm = 0.5 * p.arm_inertia * w0 * w0
    k_pend = 0.5 * p.pendulum_inertia * w1 * w1 + 0.5 * p.m1 * (
        p.l1**2 * w1 * w1
        + p.r**2 * w0 * w0
        + p.l1**2 * w0 * w0 * s1 * s1
        + 2.0 * p.r * p.l1 * w0 * w1 * c1
    )
    potential = p.m1 * p.g * p.l1 * c1
    return k_arm + k_pend + potential


def furuta_linearize(p: FurutaParams) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (A, B) of the model at the upright equilibrium.

    Velocity-product terms vanish at the equilibrium, so the rate block is
    purely the damping map -M0^-1 diag(b0 + k_t k_e/r_m, b1), the gravity
    column is M0^-1 [0, m1 g l1]' and the input column M0^-1 [duty_gain, 0]'.
    """
    m11 = p.arm_inertia + p.m1 * p.r**2
    m12 = p.m1 * p.r * p.l1
    m22 = p.pendulum_inertia + p.m1 * p.l1**2
    det = m11 * m22 - m12 * m12
    minv = np.array([[m22, -m12], [-m12, m11]]) / det

    gravity = minv @ np.array([0.0, p.m1 * p.g * p.l1])
    damping = -minv @ np.diag([p.b0 + p.k_t * p.k_e / p.r_m, p.b1])
    force = minv @ np.array([p.duty_torque_gain, 0.0])

    A = np.zeros((4, 4))
    A[TH0, W0] = 1.0
    A[TH1, W1] = 1.0
    A[W0:, TH1] = gravity
    A[W0:, W0:] = damping
    B = np.zeros((4, 1))
    B[W0:, 0] = force
    return A, B


def furuta_barrier(
    x: np.ndarray, theta1_max: float, A: np.ndarray, B: np.ndarray
) -> BarrierEvaluation:
    """Angle-limit barrier h = theta1_max^2 - theta1^2 (relative degree 2).

    The Lie derivatives are taken along the *linear* controller-side model
    (A, B) while the plant itself integrates the nonlinear dynamics: this is
    the model/plant split the enforcement policies are designed around.
    """
    th1 = float(x[TH1])
    w1 = float(x[W1])
    h = theta1_max**2 - th1 * th1
    h_dot = -2.0 * th1 * w1
    acc1_row = A[W1]
    lie_f2 = -2.0 * w1 * w1 - 2.0 * th1 * float(acc1_row @ np.asarray(x, dtype=float))
    lie_g = np.array([-2.0 * th1 * float(B[W1, 0])])
    return BarrierEvaluation(h, np.array([h, h_dot]), lie_f2, lie_g)
