"""Barrier constraint construction: hand-checked rows, pole placement,
virtual-input elimination soundness and the sliding-condition checker."""

import math

import numpy as np
import pytest

from safectrl.barrier import (
    BarrierEvaluation,
    EcbfPolicy,
    SmcbfPolicy,
    assemble_filter_qp,
    cbf_constraint_r1,
    check_sliding_condition,
    ecbf_constraint,
    pole_placement_gain,
    prune_degenerate,
    sat,
    sliding_surface,
    smcbf_constraint,
    smcbf_virtual_bound,
    LinearInputConstraint,
)
from safectrl.qp import solve_hildreth


def ev_r1(h, lf, lg):
    return BarrierEvaluation(h, np.array([h]), lf, np.atleast_1d(lg))


def ev_r2(h, hdot, lf2, lg):
    return BarrierEvaluation(h, np.array([h, hdot]), lf2, np.atleast_1d(lg))


# ── relative-degree-one constraint ───────────────────────────────────────────

def test_cbf_r1_direct_substitution():
    con = cbf_constraint_r1(ev_r1(2.0, 0.0, [1.0]), alpha_gain=1.0)
    assert con.row[0] == 1.0
    assert con.bound == -2.0  # u >= -2


def test_cbf_r1_boundary_forbids_outward_motion():
    con = cbf_constraint_r1(ev_r1(0.0, 0.0, [1.0]), alpha_gain=1.0)
    assert con.bound == 0.0  # u * Lg h >= 0 on the boundary


def test_cbf_r1_equivalent_to_derivative_condition_on_samples():
    rng = np.random.default_rng(3)
    for _ in range(100):
        h = rng.normal()
        lf = rng.normal()
        lg = rng.normal(size=2)
        alpha = abs(rng.normal()) + 0.1
        con = cbf_constraint_r1(ev_r1(h, lf, lg), alpha)
        u = rng.normal(size=2)
        condition = lf + lg @ u + alpha * h >= 0.0
        assert con.satisfied_by(u) == condition


def test_cbf_r1_rejects_wrong_degree():
    with pytest.raises(ValueError):
        cbf_constraint_r1(ev_r2(1.0, 0.0, 0.0, [1.0]), 1.0)


# ── pole placement ───────────────────────────────────────────────────────────

def test_pole_placement_recovers_bench_gain():
    # s^2 + 180 s + 3000 has roots -(90 +- sqrt(5100))
    roots = np.roots([1.0, 180.0, 3000.0])
    policy = pole_placement_gain(-roots)
    assert np.allclose(policy.gain, [3000.0, 180.0], rtol=0, atol=1e-9)


def test_pole_placement_scalar_case():
    assert pole_placement_gain([4.5]).gain[0] == pytest.approx(4.5, abs=0)


def test_pole_placement_two_poles_and_eigenvalues():
    policy = pole_placement_gain([20.0, 100.0])
    assert np.allclose(policy.gain, [2000.0, 120.0], atol=1e-12)
    eig = np.sort(np.linalg.eigvals(policy.closed_loop_matrix()).real)
    assert np.allclose(eig, [-100.0, -20.0], atol=1e-9)


def test_pole_placement_round_trip_characteristic_polynomial():
    rng = np.random.default_rng(11)
    for r in (1, 2, 3):
        for _ in range(20):
            poles = np.sort(rng.uniform(0.5, 200.0, size=r))
            policy = pole_placement_gain(poles)
            coeffs = np.poly(policy.closed_loop_matrix())
            expected = np.poly(-poles)
            assert np.allclose(coeffs, expected, rtol=1e-9, atol=1e-9)


def test_pole_placement_rejects_bad_poles():
    with pytest.raises(ValueError):
        pole_placement_gain([10.0, -1.0])
    with pytest.raises(ValueError):
        pole_placement_gain([1.0, 2.0, 3.0, 4.0])


def test_ecbf_policy_rejects_unstable_gain():
    with pytest.raises(ValueError):
        EcbfPolicy(np.array([-1.0, 2.0]))


# ── exponential barrier row ──────────────────────────────────────────────────

def test_ecbf_constraint_arithmetic():
    policy = EcbfPolicy(np.array([3000.0, 180.0]))
    con = ecbf_constraint(ev_r2(1.0, 0.0, 0.0, [1.0]), policy)
    assert con.bound == -3000.0  # u >= -3000


def test_ecbf_constraint_boundary_at_rest():
    policy = EcbfPolicy(np.array([3000.0, 180.0]))
    lf2 = 0.7
    con = ecbf_constraint(ev_r2(0.0, 0.0, lf2, [2.0]), policy)
    assert con.bound == -lf2


def test_ecbf_degree_mismatch_rejected():
    with pytest.raises(ValueError):
        ecbf_constraint(ev_r1(1.0, 0.0, [1.0]), EcbfPolicy(np.array([3000.0, 180.0])))


# ── saturation ───────────────────────────────────────────────────────────────

def test_sat_values():
    assert sat(0.5) == 0.5
    assert sat(-3.0) == -1.0
    assert sat(1.0) == 1.0  # both branches agree at the seam
    assert sat(-1.0) == -1.0


def test_sat_bounded_and_odd():
    for z in np.linspace(-10, 10, 201):
        assert -1.0 <= sat(z) <= 1.0
        assert sat(-z) == -sat(z)


# ── sliding-mode barrier row ─────────────────────────────────────────────────

def _policy(lam=10.0, eta=5.0, phi=0.1, h_d=1e-4, delta=1.0):
    return SmcbfPolicy.from_uncertainty(lam, eta, phi, h_d, delta)


def test_smcbf_on_surface_equilibrium():
    pol = _policy(h_d=1e-9)
    ev = ev_r2(1e-9, 0.0, -0.3, [2.0])
    assert sliding_surface(ev, pol) == 0.0
    assert smcbf_virtual_bound(ev, pol) == 0.0
    con = smcbf_constraint(ev, pol)
    assert con.bound == pytest.approx(0.3)  # Lg Lf h u + Lf^2 h >= 0


def test_smcbf_bench_numbers():
    # lam=10, phi=0.1, h_d=1e-4, h=0.005, hdot=-0.02:
    # S = -0.02 + 10*(0.005 - 1e-4) = 0.029 inside the layer, sat = 0.29,
    # bound mu_lo = 0.2 - 0.29 * K
    pol = _policy()
    ev = ev_r2(0.005, -0.02, 0.0, [1.0])
    s = sliding_surface(ev, pol)
    assert s == pytest.approx(0.029, abs=1e-12)
    mu_lo = smcbf_virtual_bound(ev, pol)
    assert mu_lo == pytest.approx(0.2 - 0.29 * pol.switching_gain, abs=1e-12)


def test_smcbf_saturated_branch():
    pol = _policy()
    hdot = -0.05
    h = pol.h_setpoint + (2.0 * pol.boundary_layer - hdot) / pol.lam  # S = 2 phi
    ev = ev_r2(h, hdot, 0.0, [1.0])
    assert sliding_surface(ev, pol) == pytest.approx(2.0 * pol.boundary_layer)
    assert smcbf_virtual_bound(ev, pol) == pytest.approx(
        -pol.lam * hdot - pol.switching_gain
    )


def test_smcbf_bound_continuous_across_layer_seam():
    pol = _policy()
    for sign in (+1.0, -1.0):
        # states straddling |S| = phi
        def bound_at(s_target):
            hdot = -0.01
            h = pol.h_setpoint + (s_target - hdot) / pol.lam
            return smcbf_virtual_bound(ev_r2(h, hdot, 0.0, [1.0]), pol)

        eps = 1e-9
        below = bound_at(sign * (pol.boundary_layer - eps))
        above = bound_at(sign * (pol.boundary_layer + eps))
        assert abs(below - above) < 1e-6


def test_smcbf_requires_degree_two():
    with pytest.raises(ValueError):
        smcbf_constraint(ev_r1(1.0, 0.0, [1.0]), _policy())


def test_smcbf_policy_validation():
    with pytest.raises(ValueError):
        SmcbfPolicy(lam=10.0, eta=5.0, switching_gain=6.0, boundary_layer=0.0,
                    h_setpoint=1e-4, delta_max=1.0)
    with pytest.raises(ValueError):
        SmcbfPolicy(lam=10.0, eta=5.0, switching_gain=5.5, boundary_layer=0.1,
                    h_setpoint=1e-4, delta_max=1.0)  # K < delta + eta
    with pytest.raises(ValueError):
        SmcbfPolicy(lam=10.0, eta=5.0, switching_gain=6.0, boundary_layer=0.1,
                    h_setpoint=0.0, delta_max=1.0)  # layer needs h_d > 0
    pol = _policy()
    assert pol.switching_gain == pytest.approx(pol.delta_max + pol.eta)


# ── filter QP assembly and elimination soundness ─────────────────────────────

def test_assemble_empty_returns_nominal():
    problem = assemble_filter_qp(np.array([0.3]), [])
    sol = solve_hildreth(problem)
    assert sol.u_star[0] == pytest.approx(0.3, abs=0)


def test_assemble_projection_onto_halfspace():
    problem = assemble_filter_qp(
        np.array([0.3]), [LinearInputConstraint(np.array([1.0]), 0.5)]
    )
    sol = solve_hildreth(problem)
    assert sol.u_star[0] == pytest.approx(0.5, abs=1e-9)


def test_assemble_row_width_checked():
    with pytest.raises(ValueError):
        assemble_filter_qp(np.zeros(2), [LinearInputConstraint(np.array([1.0]), 0.0)])


def test_virtual_input_elimination_soundness():
    # u feasible for the eliminated row  <=>  (u, mu := Lf^r h + Lg Lf h u)
    # feasible for the pair {equality, mu >= mu_lo}
    rng = np.random.default_rng(5)
    pol = _policy()
    for _ in range(200):
        ev = ev_r2(rng.normal(), rng.normal(), rng.normal(), rng.normal(size=3))
        con = smcbf_constraint(ev, pol)
        mu_lo = smcbf_virtual_bound(ev, pol)
        u = rng.normal(size=3)
        mu_induced = ev.lie_f_r + float(ev.lie_g_lie_f @ u)
        assert con.satisfied_by(u) == (mu_induced >= mu_lo)


def test_prune_degenerate_rows():
    vacuous = LinearInputConstraint(np.zeros(2), -1.0)
    impossible = LinearInputConstraint(np.zeros(2), 0.5)
    live = LinearInputConstraint(np.array([1.0, 0.0]), 0.2)
    kept, infeasible = prune_degenerate([vacuous, live])
    assert kept == [live] and not infeasible
    kept, infeasible = prune_degenerate([impossible, live])
    assert kept == [live] and infeasible


# ── sliding-condition checker ────────────────────────────────────────────────

def test_sliding_condition_exponential_decay_is_clean():
    # decay fast enough that eta |S| is dominated everywhere outside the layer
    t = np.arange(0.0, 1.0, 1e-3)
    s = 5.0 * np.exp(-100.0 * t)
    report = check_sliding_condition(s, eta=5.0, boundary_layer=0.1, dt=1e-3)
    assert report.violation_count == 0
    assert report.checked_count > 0
    assert report.max_residual <= 0.0


def test_sliding_condition_flags_constant_surface():
    s = np.full(100, 2.0)  # well outside the layer, not approaching
    report = check_sliding_condition(s, eta=5.0, boundary_layer=0.1, dt=1e-3)
    assert report.violation_count == 99
    assert report.max_residual == pytest.approx(5.0 * 2.0)


def test_sliding_condition_ignores_layer_interior():
    s = np.full(100, 0.05)
    report = check_sliding_condition(s, eta=5.0, boundary_layer=0.1, dt=1e-3)
    assert report.checked_count == 0
    assert report.violation_count == 0


def test_sliding_condition_mask_restricts_samples():
    s = np.full(100, 2.0)
    mask = np.zeros(100, dtype=bool)
    mask[:10] = True
    report = check_sliding_condition(s, eta=5.0, boundary_layer=0.1, dt=1e-3, mask=mask)
    assert report.checked_count == 10


def test_sliding_condition_needs_two_samples():
    with pytest.raises(ValueError):
        check_sliding_condition(np.array([1.0]), 1.0, 0.1, 1e-3)


def test_barrier_evaluation_consistency_enforced():
    with pytest.raises(ValueError):
        BarrierEvaluation(1.0, np.array([2.0, 0.0]), 0.0, np.array([1.0]))
