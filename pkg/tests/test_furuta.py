"""Pendulum model: linearization against the published matrices and a
finite-difference oracle, energy conservation, barrier geometry and
parameter perturbation."""

import dataclasses
import math

import numpy as np
import pytest

from helpers import fd_jacobian, fd_second_derivative
from safectrl.plants import furuta as fur
from safectrl.plants import perturb
from safectrl.sim import rk4_step

# Published linearization of the bench rig.
A_BENCH = np.array([
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, -19.8123, -0.1446, 0.0003],
    [0.0, 101.2361, 0.2200, -0.0015],
])
B_BENCH = np.array([0.0, 0.0, 18.8571, -28.6956])


@pytest.fixture(scope="module")
def params():
    return fur.nominal_furuta_params()


def test_catalog_parameter_values(params):
    assert (params.m0, params.m1) == (0.393, 0.068)
    assert (2 * params.l0, 2 * params.l1) == (0.365, 0.207)
    assert (params.r, params.d, params.g) == (0.210, 0.022, 9.81)
    assert (params.k_t, params.k_e, params.r_m) == (0.02, 0.08, 2.4)


def test_params_validation():
    with pytest.raises(ValueError):
        dataclasses.replace(fur.nominal_furuta_params(), m0=-1.0)
    with pytest.raises(ValueError):
        dataclasses.replace(fur.nominal_furuta_params(), b1=-1e-9)


def test_identified_damping_is_physical(params):
    # back-EMF alone accounts for most of the arm-side damping; the fitted
    # mechanical residual must stay nonnegative
    assert params.b0 > 0.0
    assert params.b0 < 2e-4
    assert 0.0 < params.b1 < 2e-6


def test_upright_equilibrium(params):
    assert np.array_equal(fur.furuta_dynamics(np.zeros(4), 0.0, params), np.zeros(4))


def test_hanging_equilibrium(params):
    x = np.array([0.3, math.pi, 0.0, 0.0])
    assert np.allclose(fur.furuta_dynamics(x, 0.0, params), 0.0, atol=1e-15)


def test_duty_is_clamped_at_the_plant(params):
    inside = fur.furuta_dynamics(np.zeros(4), 1.0, params)
    outside = fur.furuta_dynamics(np.zeros(4), 7.0, params)
    assert np.array_equal(inside, outside)


def test_linearization_gravity_and_input_entries(params):
    A, B = fur.furuta_linearize(params)
    assert A[2, 1] == pytest.approx(-19.8123, rel=5e-3)
    assert A[3, 1] == pytest.approx(101.2361, rel=5e-3)
    assert B[2, 0] == pytest.approx(18.8571, rel=5e-3)
    assert B[3, 0] == pytest.approx(-28.6956, rel=5e-3)
    assert np.array_equal(A[:2, 2:], np.eye(2))


def test_linearization_matches_finite_differences(params):
    A, B = fur.furuta_linearize(params)
    A_fd = fd_jacobian(lambda x: fur.furuta_dynamics(x, 0.0, params), np.zeros(4))
    # duty enters linearly (no clamp active near zero)
    B_fd = fd_jacobian(
        lambda u: fur.furuta_dynamics(np.zeros(4), float(u[0]), params),
        np.zeros(1),
    )
    err_A = np.max(np.abs(A - A_fd))
    err_B = np.max(np.abs(B - B_fd))
    print(f"\n  linearization FD error: A {err_A:.2e}, B {err_B:.2e}")
    assert err_A <= 1e-6
    assert err_B <= 1e-6


def test_energy_conserved_without_damping_and_input(params):
    p = dataclasses.replace(params, b0=0.0, b1=0.0)
    x = np.array([0.0, 2.0, 1.0, 0.5])  # large swing, well away from equilibria
    e0 = fur.furuta_energy(x, p)
    dt = 1e-4
    worst = 0.0
    for _ in range(10000):  # 1 s
        x = rk4_step(lambda s, u: fur.furuta_dynamics(s, 0.0, p), x, 0.0, dt)
        worst = max(worst, abs(fur.furuta_energy(x, p) - e0))
    rel = worst / abs(e0)
    print(f"\n  energy drift over 1 s: {rel:.2e} relative (E0 = {e0:.5f} J)")
    assert rel <= 1e-6


def test_motor_back_emf_opposes_arm_rate(params):
    assert fur.motor_torque(0.0, 1.0, params) < 0.0
    assert fur.motor_torque(0.5, 0.0, params) == pytest.approx(
        params.duty_torque_gain * 0.5
    )


def test_barrier_center_of_safe_set(params):
    A, B = fur.furuta_linearize(params)
    ev = fur.furuta_barrier(np.zeros(4), 0.087, A, B)
    assert ev.h == pytest.approx(0.087**2)
    assert ev.h_derivs[1] == 0.0
    assert ev.lie_g_lie_f[0] == 0.0  # degenerate row at the center


def test_barrier_boundary(params):
    A, B = fur.furuta_linearize(params)
    ev = fur.furuta_barrier(np.array([0.0, 0.087, 0.0, 0.0]), 0.087, A, B)
    assert ev.h == pytest.approx(0.0, abs=1e-15)


def test_barrier_bench_arithmetic(params):
    # with the published input column, Lg Lf h = -2 * 0.05 * B[3]
    ev = fur.furuta_barrier(
        np.array([0.0, 0.05, 0.0, 0.1]), 0.087, A_BENCH, B_BENCH.reshape(4, 1)
    )
    assert ev.h_derivs[1] == pytest.approx(-0.01)
    assert ev.lie_g_lie_f[0] == pytest.approx(2.86956)


def test_barrier_lie_derivatives_match_linear_flow(params):
    # integrate the *linear* controller-side model and compare the sampled
    # second derivative of h against Lf^2 h + Lg Lf h u
    A, B = fur.furuta_linearize(params)
    theta_max = 0.087
    u = 0.3
    x = np.array([0.02, 0.05, -0.1, 0.1])
    dt = 1e-5
    states = [x]
    for _ in range(2):
        x = rk4_step(lambda s, _u: A @ s + B[:, 0] * u, x, u, dt)
        states.append(x)
    h_samples = [theta_max**2 - s[1] ** 2 for s in states]
    ev = fur.furuta_barrier(states[1], theta_max, A, B)
    h_ddot_fd = fd_second_derivative(h_samples, dt)[0]
    h_ddot_analytic = ev.lie_f_r + ev.lie_g_lie_f[0] * u
    assert h_ddot_fd == pytest.approx(h_ddot_analytic, rel=1e-6)
    # first derivative consistency
    h_dot_fd = (h_samples[2] - h_samples[0]) / (2 * dt)
    assert h_dot_fd == pytest.approx(ev.h_derivs[1], rel=1e-6)


def test_perturb_scales_masses(params):
    heavy = perturb(params, {"m0": 1.6, "m1": 1.6})
    assert heavy.m0 == pytest.approx(0.6288)
    assert heavy.m1 == pytest.approx(0.1088)
    # original untouched
    assert params.m0 == 0.393


def test_perturb_identity_and_errors(params):
    same = perturb(params, {"m0": 1.0})
    assert same == params
    with pytest.raises(ValueError):
        perturb(params, {"bogus": 1.5})
    with pytest.raises(ValueError):
        perturb(params, {"m0": 0.0})


def test_heavier_plant_has_weaker_input_authority(params):
    # uniform mass scaling multiplies the whole mass matrix, so the input
    # column shrinks by exactly the scale while gravity coupling is unchanged
    A, B = fur.furuta_linearize(params)
    Ah, Bh = fur.furuta_linearize(perturb(params, {"m0": 1.6, "m1": 1.6}))
    assert np.all(np.abs(Bh[2:, 0]) < np.abs(B[2:, 0]))
    assert np.allclose(Bh[2:, 0], B[2:, 0] / 1.6, rtol=1e-12)
    assert np.allclose(Ah[2:, 1], A[2:, 1], rtol=1e-12)


def test_damping_fit_reproduces_its_targets_in_structure():
    # the two damping-entry ratios are pinned by the mass matrix; check the
    # identification is self-consistent with the gravity-entry ratios
    p = fur.nominal_furuta_params()
    A, _ = fur.furuta_linearize(p)
    assert A[2, 3] / A[3, 3] == pytest.approx(A[2, 1] / A[3, 1], rel=1e-12)
    assert A[2, 2] / A[3, 2] == pytest.approx(A[2, 1] / A[3, 1] * -1.0, rel=1e-12)


def test_damping_fit_rejects_unphysical_targets():
    p = fur.nominal_furuta_params()
    with pytest.raises(ValueError):
        # damping entries implying negative mechanical friction
        fur.fit_viscous_damping(
            p.m0, p.m1, p.l0, p.l1, p.r, p.d, p.k_t, p.k_e, p.r_m,
            damping_entries=(-0.01, 0.015, 0.0003, -0.0015),
        )
