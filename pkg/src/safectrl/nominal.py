"""Nominal control laws: LQR for the pendulum, sliding-mode tracking for the
levitated plate.

``solve_care`` finds the stabilizing solution of

    A'P + P A - P B R^-1 B' P + Q = 0

by extracting the stable invariant subspace of the Hamiltonian matrix and
polishing with Newton-Kleinman iterations; the gain is K = R^-1 B' P.  Both
design objects are immutable after construction and the control evaluations
are pure functions, so concurrent use is safe.

The tracking controller works in output coordinates: with y'' = f_y + g_y u,
the surface S = (y - y_d)' + lam (y - y_d) is driven to a boundary layer by

    u = g_y^-1 [-f_y + y_d'' - lam (y - y_d)']  -  g_y^-1 K sat(S / Phi)

where all model quantities are the *nominal* ones; the switching gain K
absorbs the difference between real and nominal output dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import sat


class CareError(RuntimeError):
    """No stabilizing Riccati solution found (diagnostics in the message)."""


# Relative residual accepted for a Riccati solution.
CARE_RESIDUAL_RTOL = 1e-8


def care_residual(A, B, Q, R, P) -> float:
    """Inf-norm of the Riccati residual A'P + PA - PBR^-1B'P + Q."""
    res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q
    return float(np.max(np.abs(res)))


def _solve_lyapunov(Acl: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Solve Acl' P + P Acl = -C via the Kronecker form (n <= 10)."""
    n = Acl.shape[0]
    I = np.eye(n)
    M = np.kron(I, Acl.T) + np.kron(Acl.T, I)
    P = np.linalg.solve(M, -C.reshape(-1)).reshape(n, n)
    return 0.5 * (P + P.T)


def solve_care(A, B, Q, R) -> np.ndarray:
    """Stabilizing solution of the continuous algebraic Riccati equation.

    Requires (A, B) stabilizable, Q symmetric PSD, R symmetric PD, n <= 10.
    Returns symmetric positive-definite P with relative residual below
    ``CARE_RESIDUAL_RTOL`` and A - B R^-1 B' P Hurwitz; raises ``CareError``
    with residual diagnostics otherwise.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    if n > 10:
        raise CareError(f"solver is intended for n <= 10, got n = {n}")
    if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(Q))):
        raise CareError("Q must be symmetric")
    if np.any(np.linalg.eigvalsh(Q) < -1e-10 * max(1.0, np.max(np.abs(Q)))):
        raise CareError("Q must be positive semidefinite")
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise CareError("R must be positive definite") from None

    S = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -S], [-Q, -A.T]])
    w, V = np.linalg.eig(H)
    stable = np.flatnonzero(w.real < 0.0)
    if stable.size != n:
        raise CareError(
            f"Hamiltonian has {stable.size} stable eigenvalues, expected {n}; "
            "(A, B) may not be stabilizable or Q fails to detect an unstable mode"
        )
    X = V[:, stable]
    try:
        P = np.real(X[n:, :] @ np.linalg.inv(X[:n, :]))
    except np.linalg.LinAlgError:
        raise CareError("stable invariant subspace is not a graph over the state space") from None
    P = 0.5 * (P + P.T)

    # Newton-Kleinman polish: quadratically convergent from the subspace seed.
    for _ in range(30):
        K = np.linalg.solve(R, B.T @ P)
        Acl = A - B @ K
        if np.any(np.linalg.eigvals(Acl).real >= 0.0):
            break
        Pn = _solve_lyapunov(Acl, Q + K.T @ R @ K)
        step = np.max(np.abs(Pn - P))
        P = Pn
        if step <= 1e-13 * max(1.0, np.max(np.abs(P))):
            break

    resid = care_residual(A, B, Q, R, P)
    scale = max(np.max(np.abs(Q)), 1e-300)
    K = np.linalg.solve(R, B.T @ P)
    cl = np.linalg.eigvals(A - B @ K)
    if resid > CARE_RESIDUAL_RTOL * scale or np.any(cl.real >= 0.0):
        raise CareError(
            f"no stabilizing solution: residual {resid:.3e} "
            f"(relative {resid / scale:.3e}), closed-loop eigenvalues {cl}"
        )
    if np.any(np.linalg.eigvalsh(P) <= 0.0):
        raise CareError("Riccati solution is not positive definite")
    return P


@dataclass(frozen=True)
class LqrDesign:
    """Optimal state feedback with reference feedforward on two channels.

    ``k_ref`` holds the feedforward gains for the two position references;
    they coincide with the first two entries of the gain row, which makes the
    closed loop track position setpoints with zero steady-state error on the
    linear model.
    """

    a: np.ndarray
    b: np.ndarray
    q_weight: np.ndarray
    r_weight: np.ndarray
    riccati: np.ndarray
    gain: np.ndarray           # (1, n)
    k_ref: tuple[float, float]

    @classmethod
    def design(cls, A, B, Q, R) -> "LqrDesign":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        R = np.atleast_2d(np.asarray(R, dtype=float))
        P = solve_care(A, B, Q, R)
        K = np.linalg.solve(R, B.T @ P)
        return cls(A, B, Q, R, P, K, (float(K[0, 0]), float(K[0, 1])))

    def residual(self) -> float:
        return care_residual(self.a, self.b, self.q_weight, self.r_weight, self.riccati)


def lqr_control(
    design: LqrDesign, x: np.ndarray, theta0_ref: float, theta1_ref: float
) -> np.ndarray:
    """u = -K x + k1 * theta0_ref + k2 * theta1_ref (single input)."""
    k1, k2 = design.k_ref
    u = -float(design.gain[0] @ np.asarray(x, dtype=float))
    u += k1 * theta0_ref + k2 * theta1_ref
    return np.array([u])


@dataclass(frozen=True)
class SmcTrackingDesign:
    """Sliding-mode output tracking parameters for a square MIMO plant."""

    lam: np.ndarray             # (p,) diagonal of the surface slope matrix
    eta: np.ndarray             # (p,) reaching margins
    boundary_layer: np.ndarray  # (p,) layer thickness per channel
    switching_gain: np.ndarray  # (p,) K per channel

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).ravel()
        eta = np.asarray(self.eta, dtype=float).ravel()
        phi = np.asarray(self.boundary_layer, dtype=float).ravel()
        K = np.asarray(self.switching_gain, dtype=float).ravel()
        p = lam.size
        if not (eta.size == phi.size == K.size == p):
            raise ValueError("lam, eta, boundary_layer, switching_gain sizes differ")
        if np.any(lam <= 0.0) or np.any(phi <= 0.0) or np.any(eta <= 0.0):
            raise ValueError("lam, eta and boundary_layer must be positive")
        for name, arr in (("lam", lam), ("eta", eta), ("boundary_layer", phi),
                          ("switching_gain", K)):
            object.__setattr__(self, name, arr)


def smc_switching_gain_bound(
    f_real: np.ndarray,
    g_real: np.ndarray,
    f_nom: np.ndarray,
    g_nom: np.ndarray,
    eta: np.ndarray,
    ydd_des: np.ndarray,
    lam_ytilde_dot: np.ndarray,
) -> np.ndarray:
    """Componentwise lower bound on the switching gain at one state.

    Evaluates g^-1 g_nom (eta + f) - f_nom + (I - g^-1 g_nom)(ydd_des -
    lam*ytilde_dot) with the real output dynamics (f, g) this design wants to
    tolerate.  The scenario builders take the max over a probe set of states.
    """
    ratio = np.linalg.solve(np.asarray(g_real, dtype=float), np.asarray(g_nom, dtype=float))
    f_real = np.asarray(f_real, dtype=float).ravel()
    f_nom = np.asarray(f_nom, dtype=float).ravel()
    drive = np.asarray(ydd_des, dtype=float).ravel() - np.asarray(lam_ytilde_dot, dtype=float).ravel()
    p = f_real.size
    return ratio @ (np.asarray(eta, dtype=float).ravel() + f_real) - f_nom + (np.eye(p) - ratio) @ drive


def smc_tracking_control(
    design: SmcTrackingDesign,
    y: np.ndarray,
    y_dot: np.ndarray,
    f_nom: np.ndarray,
    g_nom: np.ndarray,
    y_des: np.ndarray,
    y_des_dot: np.ndarray,
    y_des_ddot: np.ndarray,
) -> np.ndarray:
    """Equivalent control plus saturated switching term, in output space.

    (f_nom, g_nom) are the nominal output dynamics evaluated at the current
    state; g_nom must be well conditioned since the law inverts it.
    """
    g_nom = np.asarray(g_nom, dtype=float)
    if np.linalg.cond(g_nom) > 1e8:
        raise ValueError("output decoupling matrix is near singular")
    y_t = np.asarray(y, dtype=float) - np.asarray(y_des, dtype=float)
    y_t_dot = np.asarray(y_dot, dtype=float) - np.asarray(y_des_dot, dtype=float)
    s = y_t_dot + design.lam * y_t
    drive = (
        -np.asarray(f_nom, dtype=float)
        + np.asarray(y_des_ddot, dtype=float)
        - design.lam * y_t_dot
    )
    switch = design.switching_gain * np.array(
        [sat(si / phi) for si, phi in zip(s, design.boundary_layer)]
    )
    return np.linalg.solve(g_nom, drive - switch)


def tracking_surface(
    design: SmcTrackingDesign, y, y_dot, y_des, y_des_dot
) -> np.ndarray:
    """S = (y - y_des)' + lam (y - y_des), one value per output channel."""
    y_t = np.asarray(y, dtype=float) - np.asarray(y_des, dtype=float)
    y_t_dot = np.asarray(y_dot, dtype=float) - np.asarray(y_des_dot, dtype=float)
    return y_t_dot + design.lam * y_t


def maglev_tracking_control(
    design: SmcTrackingDesign,
    x: np.ndarray,
    params_nominal,
    y_des: np.ndarray,
    y_des_dot: np.ndarray,
    y_des_ddot: np.ndarray,
) -> np.ndarray:
    """Tracking law for the levitation plate from its state.

    Evaluates the nominal output dynamics at x and applies
    ``smc_tracking_control``; the returned inputs are magnet forces.
    """
    from .plants.maglev import maglev_output, maglev_output_dynamics, maglev_output_rate

    y = maglev_output(x, params_nominal)
    y_dot = maglev_output_rate(x, params_nominal)
    f_nom, g_nom = maglev_output_dynamics(x, params_nominal)
    return smc_tracking_control(design, y, y_dot, f_nom, g_nom, y_des, y_des_dot, y_des_ddot)
