"""Shared independent oracles for the test suite.

Everything here is deliberately dumb and slow: finite differences,
enumeration, and brute-force integration, kept free of the code paths they
check.
"""

from __future__ import annotations

import numpy as np

from safectrl.qp import QpProblem


def fd_jacobian(func, x0, eps=1e-6):
    """Central-difference Jacobian of func at x0."""
    x0 = np.asarray(x0, dtype=float)
    f0 = np.asarray(func(x0), dtype=float)
    jac = np.zeros((f0.size, x0.size))
    for i in range(x0.size):
        step = np.zeros_like(x0)
        step[i] = eps
        jac[:, i] = (np.asarray(func(x0 + step)) - np.asarray(func(x0 - step))) / (2 * eps)
    return jac


def riccati_ode_gain(A, B, Q, R, dt=5e-4, horizon=20.0):
    """LQR gain by integrating the differential Riccati equation to rest.

    dP/dtau = A'P + PA - P B R^-1 B' P + Q from P = 0, RK4 in the
    time-to-go variable until stationary; independent of the algebraic
    solver it cross-checks.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.asarray(Q, dtype=float)
    Rinv = np.linalg.inv(np.atleast_2d(np.asarray(R, dtype=float)))
    S = B @ Rinv @ B.T

    def flow(P):
        return A.T @ P + P @ A - P @ S @ P + Q

    P = np.zeros_like(A)
    steps = int(round(horizon / dt))
    for _ in range(steps):
        k1 = flow(P)
        k2 = flow(P + 0.5 * dt * k1)
        k3 = flow(P + 0.5 * dt * k2)
        k4 = flow(P + dt * k3)
        P_next = P + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.max(np.abs(P_next - P)) < 1e-12 * max(1.0, np.max(np.abs(P))):
            P = P_next
            break
        P = P_next
    return Rinv @ B.T @ P, P


def random_feasible_qp(rng, n, k):
    """Random SPD objective with a guaranteed strictly feasible point."""
    A = rng.normal(size=(n, n))
    hessian = A @ A.T + n * np.eye(n)
    c = rng.normal(size=n)
    M = rng.normal(size=(k, n))
    u0 = rng.normal(size=n)
    slack = np.abs(rng.normal(size=k)) + 0.1
    return QpProblem(hessian, c, M, M @ u0 - slack)


def fd_second_derivative(samples, dt):
    """Second derivative of a uniformly sampled scalar series (interior)."""
    s = np.asarray(samples, dtype=float)
    return (s[2:] - 2.0 * s[1:-1] + s[:-2]) / dt**2
