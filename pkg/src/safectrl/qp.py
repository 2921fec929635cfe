"""Dense strictly convex quadratic programs with inequality constraints.

Problems have the form

    minimize    0.5 * u' H u + c' u
    subject to  M u >= gamma        (componentwise)

with H symmetric positive definite.  The safety filter built on top of this
module always uses H = 2*I and c = -2*u_nominal, so that the objective is the
squared distance to the nominal input, but the solver accepts any SPD H.

Two solvers are provided:

* ``solve_hildreth`` -- Hildreth's dual coordinate descent.  The dual of the
  QP above is ``max_{lam >= 0} -0.5 lam' G lam + d' lam`` with
  ``G = M H^-1 M'`` and ``d = gamma + M H^-1 c``; one sweep performs an exact
  coordinate maximization for each multiplier followed by projection onto
  ``lam_i >= 0``.  Cheap, dependency-free and exact enough for the tiny
  problems produced by the filter (n <= 4, k <= 3 in practice).
* ``solve_active_set_oracle`` -- exhaustive enumeration of active sets.  It is
  exponential in the number of constraints and exists only as an independent
  reference for testing the iterative solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Solution status codes.
CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
INFEASIBLE = "infeasible_detected"

# Default dual-change tolerance and sweep budget.  The filter problems are
# tiny, so being strict costs nothing.
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000

# A diverging dual norm beyond this is treated as proof of infeasibility.
_DUAL_DIVERGENCE = 1e9


class QpError(ValueError):
    """Raised for structurally invalid problems (bad shapes, H not SPD)."""


@dataclass(frozen=True)
class QpProblem:
    """Strictly convex QP ``min 0.5 u'Hu + c'u  s.t.  M u >= gamma``."""

    hessian: np.ndarray            # (n, n), symmetric positive definite
    linear: np.ndarray             # (n,)
    constraint_matrix: np.ndarray  # (k, n)
    constraint_bounds: np.ndarray  # (k,)

    def __post_init__(self):
        H = np.asarray(self.hessian, dtype=float)
        c = np.asarray(self.linear, dtype=float).ravel()
        M = np.atleast_2d(np.asarray(self.constraint_matrix, dtype=float))
        g = np.asarray(self.constraint_bounds, dtype=float).ravel()
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise QpError(f"hessian must be square, got shape {H.shape}")
        n = H.shape[0]
        if c.shape != (n,):
            raise QpError(f"linear term has shape {c.shape}, expected ({n},)")
        if M.size == 0:
            M = np.zeros((0, n))
        if M.shape[1] != n:
            raise QpError(f"constraint matrix width {M.shape[1]} != {n}")
        if g.shape != (M.shape[0],):
            raise QpError(
                f"constraint bounds have shape {g.shape}, expected ({M.shape[0]},)"
            )
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-12:
            raise QpError("hessian is not symmetric within 1e-12")
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            raise QpError("hessian is not positive definite") from None
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "linear", c)
        object.__setattr__(self, "constraint_matrix", M)
        object.__setattr__(self, "constraint_bounds", g)

    @property
    def n(self) -> int:
        return self.hessian.shape[0]

    @property
    def k(self) -> int:
        return self.constraint_matrix.shape[0]

    def objective(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.hessian @ u + self.linear @ u)


@dataclass(frozen=True)
class QpSolution:
    u_star: np.ndarray
    multipliers: np.ndarray
    iterations: int
    status: str

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


@dataclass(frozen=True)
class KktResiduals:
    """Residual bundle for checking a candidate solution of a QpProblem."""

    stationarity: float       # ||H u + c - M' lam||_inf
    primal_feasibility: float  # max(0, max_i(gamma_i - M_i u))
    dual_feasibility: float    # max(0, -min_i lam_i)
    complementarity: float     # max_i |lam_i * (M_i u - gamma_i)|


def kkt_residuals(problem: QpProblem, solution: QpSolution) -> KktResiduals:
    u, lam = solution.u_star, solution.multipliers
    M, g = problem.constraint_matrix, problem.constraint_bounds
    grad = problem.hessian @ u + problem.linear
    if problem.k:
        grad = grad - M.T @ lam
        slack = M @ u - g
        primal = float(max(0.0, np.max(-slack)))
        dual = float(max(0.0, np.max(-lam)))
        comp = float(np.max(np.abs(lam * slack)))
    else:
        primal = dual = comp = 0.0
    return KktResiduals(float(np.max(np.abs(grad))), primal, dual, comp)


def _unconstrained_minimizer(problem: QpProblem) -> np.ndarray:
    return np.linalg.solve(problem.hessian, -problem.linear)


def solve_hildreth(
    problem: QpProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> QpSolution:
    """Solve the QP by Hildreth's dual coordinate descent.

    ``tol`` bounds the maximum elementwise dual change over one full sweep;
    ``max_iter`` bounds the number of sweeps.  With no constraints the
    unconstrained minimizer ``-H^-1 c`` is returned directly.  A constraint
    row that is identically zero with a positive bound, or a dual iterate
    diverging past 1e9, yields ``infeasible_detected``; the caller decides the
    fallback policy (the simulation passes the nominal input through).
    """
    if tol <= 0:
        raise QpError("tol must be positive")
    if max_iter < 1:
        raise QpError("max_iter must be >= 1")

    k = problem.k
    u_free = _unconstrained_minimizer(problem)
    if k == 0:
        return QpSolution(u_free, np.zeros(0), 0, CONVERGED)

    M, gamma = problem.constraint_matrix, problem.constraint_bounds
    zero_rows = ~np.any(M != 0.0, axis=1)
    if np.any(zero_rows & (gamma > 0.0)):
        return QpSolution(u_free, np.zeros(k), 0, INFEASIBLE)
    # Zero rows with gamma <= 0 are vacuous; keep their multipliers at zero.
    sweep_idx = np.flatnonzero(~zero_rows)

    Hinv_MT = np.linalg.solve(problem.hessian, M.T)  # H^-1 M'
    G = M @ Hinv_MT
    d = gamma + M @ np.linalg.solve(problem.hessian, problem.linear)

    lam = np.zeros(k)
    status = MAX_ITERATIONS
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_change = 0.0
        for i in sweep_idx:
            new = (d[i] - G[i] @ lam + G[i, i] * lam[i]) / G[i, i]
            if new < 0.0:
                new = 0.0
            change = abs(new - lam[i])
            if change > max_change:
                max_change = change
            lam[i] = new
        if max_change <= tol:
            status = CONVERGED
            break
        if np.max(lam) > _DUAL_DIVERGENCE:
            status = INFEASIBLE
            break

    u = np.linalg.solve(problem.hessian, M.T @ lam - problem.linear)
    return QpSolution(u, lam, sweeps, status)


def dual_objective(problem: QpProblem, lam: np.ndarray) -> float:
    """Dual objective ``-0.5 lam'G lam + d'lam`` (monotone across sweeps)."""
    M = problem.constraint_matrix
    Hinv_MT = np.linalg.solve(problem.hessian, M.T)
    G = M @ Hinv_MT
    d = problem.constraint_bounds + M @ np.linalg.solve(
        problem.hessian, problem.linear
    )
    lam = np.asarray(lam, dtype=float)
    return float(-0.5 * lam @ G @ lam + d @ lam)


def solve_active_set_oracle(problem: QpProblem) -> QpSolution:
    """Exact KKT point by enumerating all active sets (test oracle).

    For every subset A of constraints, solves the equality-constrained system

        [ H   -M_A' ] [u  ]   [-c     ]
        [ M_A   0   ] [lam] = [gamma_A]

    and keeps the first candidate that is primal feasible on all constraints
    with nonnegative multipliers.  Any such point is the global minimizer of
    the convex problem.  Exponential in k; guarded at k <= 20.
    """
    k = problem.k
    if k > 20:
        raise QpError(f"active-set enumeration limited to k <= 20, got {k}")
    H, c = problem.hessian, problem.linear
    M, gamma = problem.constraint_matrix, problem.constraint_bounds
    n = problem.n

    best: tuple[float, np.ndarray, np.ndarray] | None = None
    for mask in range(1 << k):
        active = [i for i in range(k) if mask >> i & 1]
        na = len(active)
        if na > n:
            continue  # more active rows than variables: KKT system overdetermined
        kkt = np.zeros((n + na, n + na))
        kkt[:n, :n] = H
        rhs = np.concatenate([-c, gamma[active]])
        if na:
            Ma = M[active]
            kkt[:n, n:] = -Ma.T
            kkt[n:, :n] = Ma
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        u = sol[:n]
        lam_a = sol[n:]
        if np.any(lam_a < -1e-9):
            continue
        if problem.k and np.min(M @ u - gamma) < -1e-9:
            continue
        obj = problem.objective(u)
        if best is None or obj < best[0]:
            lam = np.zeros(k)
            lam[active] = np.maximum(lam_a, 0.0)
            best = (obj, u, lam)
    if best is None:
        return QpSolution(_unconstrained_minimizer(problem), np.zeros(k), 0, INFEASIBLE)
    return QpSolution(best[1], best[2], 0, CONVERGED)
