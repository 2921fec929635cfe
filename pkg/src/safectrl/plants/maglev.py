"""Magnetic levitation rig: a rigid Y-shaped plate held by three
electromagnets.

The plate has vertical, pitching and rolling freedoms; the inputs are the
attractive forces of the three magnets (nonnegative: magnets only pull) and
the measured outputs are three gap positions under the plate edges.
Equations of motion:

    M x_v''     = M g - (F1 + F2 + F3)
    J_p theta_p'' = F1 l1 - (F2 + F3) l2 - M g d sin(theta_p)
    J_r theta_r'' = (F2 - F3) l3      - M g d sin(theta_r)

and the gap sensors read

    r1 = x_v - l1 tan(theta_p)
    r2 = x_v + l2 tan(theta_p) - l3 tan(theta_r)
    r3 = x_v + l2 tan(theta_p) + l3 tan(theta_r)

The output relation only holds for |theta| < pi/2 (tan singularity); the
output acceleration decomposition y'' = f_y(x) + g_y(x) u follows from
differentiating the sensor map twice, which adds sec^2 * tan * rate^2
curvature terms to the chain of the rigid-body accelerations.

Each magnet obeys the static force law F = k (V / r)^2, used here only to
report coil voltages; control operates directly in force space.

State layout: x = [x_v, theta_p, theta_r, x_v', theta_p', theta_r'].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..barrier import BarrierEvaluation

# State indices.
XV, TP, TR, VXV, VTP, VTR = range(6)

_ANGLE_LIMIT = math.pi / 2.0


@dataclass(frozen=True)
class MaglevParams:
    l1: float      # magnet 1 lever arm about the pitch axis, m
    l2: float      # magnets 2/3 lever arm about the pitch axis, m
    l3: float      # magnets 2/3 lever arm about the roll axis, m
    mass: float    # plate mass, kg
    g: float       # m/s^2
    j_pitch: float  # kg m^2
    j_roll: float   # kg m^2
    k1: float      # magnet force constants, N m^2 / V^2
    k2: float
    k3: float
    d: float       # origin-to-center-of-gravity offset, m

    def __post_init__(self):
        for name in ("l1", "l2", "l3", "mass", "g", "j_pitch", "j_roll",
                     "k1", "k2", "k3", "d"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def force_constants(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3])


def nominal_maglev_params() -> MaglevParams:
    """Catalog parameters of the bench rig."""
    return MaglevParams(
        l1=0.306, l2=0.203, l3=0.120,
        mass=1.93, g=9.81,
        j_pitch=6.43e-2, j_roll=1.82e-2,
        k1=3.70e-4, k2=1.03e-4, k3=1.36e-4,
        d=3.24e-3,
    )


def _check_angles(x) -> None:
    if abs(x[TP]) >= _ANGLE_LIMIT or abs(x[TR]) >= _ANGLE_LIMIT:
        raise ValueError(
            f"plate angles ({x[TP]:.4f}, {x[TR]:.4f}) outside (-pi/2, pi/2)"
        )


def maglev_dynamics(x: np.ndarray, forces: np.ndarray, p: MaglevParams) -> np.ndarray:
    """State derivative under magnet forces (clamped to F >= 0 plant-side)."""
    _check_angles(x)
    f1 = max(0.0, float(forces[0]))
    f2 = max(0.0, float(forces[1]))
    f3 = max(0.0, float(forces[2]))
    acc_v = p.g - (f1 + f2 + f3) / p.mass
    acc_p = (f1 * p.l1 - (f2 + f3) * p.l2 - p.mass * p.g * p.d * math.sin(x[TP])) / p.j_pitch
    acc_r = ((f2 - f3) * p.l3 - p.mass * p.g * p.d * math.sin(x[TR])) / p.j_roll
    return np.array([x[VXV], x[VTP], x[VTR], acc_v, acc_p, acc_r])


def equilibrium_forces(p: MaglevParams) -> np.ndarray:
    """Static forces holding the plate level: zero net force and torques."""
    f1 = p.mass * p.g * p.l2 / (p.l1 + p.l2)
    f23 = 0.5 * (p.mass * p.g - f1)
    return np.array([f1, f23, f23])


def maglev_output(x: np.ndarray, p: MaglevParams) -> np.ndarray:
    """Gap positions [r1, r2, r3] from the sensor geometry."""
    _check_angles(x)
    tp = math.tan(x[TP])
    tr = math.tan(x[TR])
    xv = float(x[XV])
    return np.array([
        xv - p.l1 * tp,
        xv + p.l2 * tp - p.l3 * tr,
        xv + p.l2 * tp + p.l3 * tr,
    ])


def _position_jacobian(x, p: MaglevParams) -> np.ndarray:
    """d(outputs)/d(x_v, theta_p, theta_r)."""
    sec2_p = 1.0 / math.cos(x[TP]) ** 2
    sec2_r = 1.0 / math.cos(x[TR]) ** 2
    return np.array([
        [1.0, -p.l1 * sec2_p, 0.0],
        [1.0, p.l2 * sec2_p, -p.l3 * sec2_r],
        [1.0, p.l2 * sec2_p, p.l3 * sec2_r],
    ])


def maglev_output_rate(x: np.ndarray, p: MaglevParams) -> np.ndarray:
    """First time derivative of the gap positions."""
    _check_angles(x)
    return _position_jacobian(x, p) @ np.asarray(x[VXV:], dtype=float)


def maglev_output_dynamics(x: np.ndarray, p: MaglevParams) -> tuple[np.ndarray, np.ndarray]:
    """(f_y, g_y) with y'' = f_y(x) + g_y(x) F.

    f_y collects the drift accelerations mapped through the sensor Jacobian
    plus the curvature terms 2 l sec^2(theta) tan(theta) theta'^2 from
    differentiating tan; g_y is the sensor Jacobian composed with the force
    input map of the rigid-body accelerations.
    """
    _check_angles(x)
    cp = math.cos(x[TP])
    cr = math.cos(x[TR])
    if cp < 1e-6 or cr < 1e-6:
        raise ValueError("plate angle too close to pi/2 for output dynamics")
    sec2_p = 1.0 / (cp * cp)
    sec2_r = 1.0 / (cr * cr)
    tp = math.tan(x[TP])
    tr = math.tan(x[TR])
    wp = float(x[VTP])
    wr = float(x[VTR])

    jac = _position_jacobian(x, p)
    # drift accelerations of (x_v, theta_p, theta_r)
    f_acc = np.array([
        p.g,
        -p.mass * p.g * p.d * math.sin(x[TP]) / p.j_pitch,
        -p.mass * p.g * p.d * math.sin(x[TR]) / p.j_roll,
    ])
    g_acc = np.array([
        [-1.0 / p.mass, -1.0 / p.mass, -1.0 / p.mass],
        [p.l1 / p.j_pitch, -p.l2 / p.j_pitch, -p.l2 / p.j_pitch],
        [0.0, p.l3 / p.j_roll, -p.l3 / p.j_roll],
    ])

    curve_p = 2.0 * sec2_p * tp * wp * wp
    curve_r = 2.0 * sec2_r * tr * wr * wr
    curvature = np.array([
        -p.l1 * curve_p,
        p.l2 * curve_p - p.l3 * curve_r,
        p.l2 * curve_p + p.l3 * curve_r,
    ])

    f_y = jac @ f_acc + curvature
    g_y = jac @ g_acc
    return f_y, g_y


def maglev_barrier(
    x: np.ndarray,
    j: int,
    r_max: float,
    r_setpoint: float,
    p: MaglevParams,
    outputs: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> BarrierEvaluation:
    """Gap-deviation barrier h_j = r_max^2 - (r_j - r_setpoint)^2 (degree 2).

    Lie derivatives use the nominal parameters (controller-side model).  The
    three per-magnet barriers share the same output evaluation; callers that
    build all of them per step can pass ``outputs = (r, r_dot, f_y, g_y)``
    precomputed once.
    """
    if j not in (0, 1, 2):
        raise ValueError(f"constraint index must be 0, 1 or 2, got {j}")
    if outputs is None:
        r = maglev_output(x, p)
        r_dot = maglev_output_rate(x, p)
        f_y, g_y = maglev_output_dynamics(x, p)
    else:
        r, r_dot, f_y, g_y = outputs
    err = float(r[j]) - r_setpoint
    h = r_max * r_max - err * err
    h_dot = -2.0 * err * float(r_dot[j])
    lie_f2 = -2.0 * float(r_dot[j]) ** 2 - 2.0 * err * float(f_y[j])
    lie_g = -2.0 * err * g_y[j]
    return BarrierEvaluation(h, np.array([h, h_dot]), lie_f2, lie_g)


def maglev_force_to_voltage(
    forces: np.ndarray, positions: np.ndarray, p: MaglevParams
) -> np.ndarray:
    """Coil voltages realizing the given attractive forces at the given gaps.

    Inverse of F = k (V / r)^2, reporting convenience only; attractive
    magnets cannot produce negative forces.
    """
    forces = np.asarray(forces, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if np.any(forces < 0.0):
        raise ValueError("electromagnets only attract: forces must be >= 0")
    if np.any(positions == 0.0):
        raise ValueError("voltage is undefined at zero gap")
    return np.abs(positions) * np.sqrt(forces / p.force_constants)


def maglev_voltage_to_force(
    voltages: np.ndarray, positions: np.ndarray, p: MaglevParams
) -> np.ndarray:
    """Static magnet law F = k (V / r)^2."""
    voltages = np.asarray(voltages, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if np.any(positions == 0.0):
        raise ValueError("force is undefined at zero gap")
    return p.force_constants * (voltages / positions) ** 2


def state_from_gaps(gaps: np.ndarray, p: MaglevParams) -> np.ndarray:
    """Resting state whose sensor outputs equal the given gaps.

    Inverts the sensor map: theta_r from r3 - r2, theta_p from the mean of
    r2, r3 against r1, then x_v from r1; velocities zero.
    """
    r1, r2, r3 = (float(v) for v in gaps)
    tan_r = (r3 - r2) / (2.0 * p.l3)
    tan_p = (0.5 * (r2 + r3) - r1) / (p.l1 + p.l2)
    theta_p = math.atan(tan_p)
    theta_r = math.atan(tan_r)
    x_v = r1 + p.l1 * tan_p
    return np.array([x_v, theta_p, theta_r, 0.0, 0.0, 0.0])
