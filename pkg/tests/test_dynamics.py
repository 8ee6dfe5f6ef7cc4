import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecd_arm.dynamics import (ArmParameters, JointState, ParameterError, end_effector,
                              energy_rates, forward_acceleration, gravity_gradient,
                              inverse_dynamics, link_energies, mass_matrix,
                              mass_matrix_link1, mass_matrix_link2, potential_energies,
                              tip_jacobian, tip_power)

G = 9.81
PARAMS = ArmParameters()
angles = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)
rates = st.floats(-5.0, 5.0, allow_nan=False)
vec2 = lambda elem: st.tuples(elem, elem).map(np.array)  # noqa: E731


def total_energy(q, qd, params=PARAMS):
    en = link_energies(JointState(q, qd, np.zeros_like(q)), params)
    return en.E1 + en.E2


class TestParameters:
    def test_reference_values(self):
        p = ArmParameters()
        assert (p.l1, p.lc1, p.lc2, p.H) == (0.8, 0.16, 0.25, 1.8)

    @pytest.mark.parametrize("kw", [
        {"m1": 0.0}, {"I1": 0.0}, {"m2": -1.0}, {"lc1": 0.9}, {"lc2": 0.0},
        {"H": 1.0}, {"F": (0.0, np.inf)},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            ArmParameters(**kw)


class TestMassMatrices:
    def test_link1_reference(self):
        np.testing.assert_allclose(mass_matrix_link1(PARAMS), [[1.0256, 0], [0, 0]], atol=1e-12)

    def test_link1_other(self):
        p = ArmParameters(m1=2.0, lc1=0.5, I1=0.1)
        np.testing.assert_allclose(mass_matrix_link1(p), [[0.6, 0], [0, 0]], atol=1e-12)

    def test_link2_straight(self):
        np.testing.assert_allclose(mass_matrix_link2(0.0, PARAMS),
                                   [[2.1025, 1.2625], [1.2625, 1.0625]], atol=1e-12)

    def test_link2_right_angle(self):
        np.testing.assert_allclose(mass_matrix_link2(np.pi / 2, PARAMS),
                                   [[1.7025, 1.0625], [1.0625, 1.0625]], atol=1e-12)

    def test_link2_pi_symmetry(self):
        np.testing.assert_array_equal(mass_matrix_link2(np.pi, PARAMS),
                                      mass_matrix_link2(-np.pi, PARAMS))

    def test_link2_from_point_mass_kinematics(self):
        # K2 = 1/2 m2 |v_com2|^2 + 1/2 I2 (q1dot + q2dot)^2
        rng = np.random.default_rng(3)
        for _ in range(20):
            q, qd = rng.normal(size=2), rng.normal(size=2)
            l1, lc2 = PARAMS.l1, PARAMS.lc2
            J = np.array([
                [-l1 * np.sin(q[0]) - lc2 * np.sin(q.sum()), -lc2 * np.sin(q.sum())],
                [l1 * np.cos(q[0]) + lc2 * np.cos(q.sum()), lc2 * np.cos(q.sum())],
            ])
            v = J @ qd
            K2 = 0.5 * PARAMS.m2 * v @ v + 0.5 * PARAMS.I2 * qd.sum() ** 2
            assert 0.5 * qd @ mass_matrix_link2(q[1], PARAMS) @ qd == pytest.approx(K2, rel=1e-12)

    @given(angles)
    def test_link2_even_and_psd(self, q2):
        D = mass_matrix_link2(q2, PARAMS)
        np.testing.assert_allclose(D, mass_matrix_link2(-q2, PARAMS), atol=1e-14)
        np.testing.assert_allclose(D, D.T)
        assert np.linalg.eigvalsh(D).min() >= -1e-12

    def test_total_positive_definite(self):
        q = np.random.default_rng(0).uniform(-10, 10, size=(2, 1000))
        D = mass_matrix(q, PARAMS)
        for k in range(q.shape[1]):
            np.linalg.cholesky(D[:, :, k])


class TestEnergies:
    def test_hanging(self):
        en = link_energies(JointState.static([-np.pi / 2, 0.0]), PARAMS)
        assert en.K1 == en.K2 == 0.0
        assert en.V1 == pytest.approx(1.64 * G, abs=1e-12)
        assert en.V2 == pytest.approx(0.75 * G, abs=1e-12)
        assert en.V1 == pytest.approx(16.0884, abs=1e-10)
        assert en.V2 == pytest.approx(7.3575, abs=1e-10)

    def test_horizontal(self):
        en = link_energies(JointState.static([0.0, 0.0]), PARAMS)
        assert en.V1 == pytest.approx(17.658, abs=1e-10)
        assert en.V2 == pytest.approx(17.658, abs=1e-10)

    @given(vec2(angles))
    def test_rest_has_no_kinetic_energy(self, q):
        en = link_energies(JointState.static(q), PARAMS)
        assert en.K1 == 0.0 and en.K2 == 0.0

    @given(vec2(angles))
    def test_potential_bounds(self, q):
        V1, V2 = potential_energies(q, PARAMS)
        assert V1 >= PARAMS.m1 * G * (PARAMS.H - PARAMS.lc1) - 1e-12
        assert V2 >= PARAMS.m2 * G * (PARAMS.H - PARAMS.l1 - PARAMS.lc2) - 1e-12
        assert V2 >= 0.75 * G - 1e-12


class TestKinematics:
    @pytest.mark.parametrize("q, expected", [
        ((0.0, 0.0), (1.8, 0.0)),
        ((-np.pi / 2, 0.0), (0.0, -1.8)),
    ])
    def test_position(self, q, expected):
        pos, _ = end_effector(q, (0.0, 0.0), PARAMS)
        np.testing.assert_allclose(pos, expected, atol=1e-12)

    def test_rigid_rotation(self):
        _, vel = end_effector((0.0, 0.0), (1.0, 0.0), PARAMS)
        np.testing.assert_allclose(vel, (0.0, 1.8), atol=1e-12)

    def test_jacobian_matches_finite_difference(self):
        q = np.array([0.3, -1.1])
        h = 1e-6
        fd = np.column_stack([
            (end_effector(q + h * e, (0, 0), PARAMS)[0] - end_effector(q - h * e, (0, 0), PARAMS)[0]) / (2 * h)
            for e in np.eye(2)
        ])
        np.testing.assert_allclose(tip_jacobian(q, PARAMS), fd, atol=1e-9)


class TestInverseDynamics:
    def test_hanging_rest_needs_no_torque(self):
        tau = inverse_dynamics(JointState.static([-np.pi / 2, 0.0]), PARAMS)
        np.testing.assert_allclose(tau, (0.0, 0.0), atol=1e-12)

    def test_horizontal_rest(self):
        tau = inverse_dynamics(JointState.static([0.0, 0.0]), PARAMS)
        np.testing.assert_allclose(tau, (11.8701, 2.4525), atol=1e-10)
        np.testing.assert_allclose(tau, (1.21 * G, 0.25 * G), atol=1e-12)

    def test_horizontal_rest_with_load(self):
        p = ArmParameters(F=(0.0, -10.0))
        tau = inverse_dynamics(JointState.static([0.0, 0.0]), p)
        np.testing.assert_allclose(tau, (29.8701, 12.4525), atol=1e-10)

    def test_gravity_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(5)
        h = 1e-6
        for q in rng.uniform(-np.pi, np.pi, size=(20, 2)):
            fd = [(sum(potential_energies(q + h * e, PARAMS)) - sum(potential_energies(q - h * e, PARAMS))) / (2 * h)
                  for e in np.eye(2)]
            np.testing.assert_allclose(gravity_gradient(q, PARAMS), fd, atol=1e-7)

    def test_matches_lagrangian_by_finite_differences(self):
        # tau + J^T F = d/dt dL/dqdot - dL/dq, with L = K - V, via central differences
        p = ArmParameters(F=(1.5, -4.0))
        q, qd, qdd = np.array([0.4, -0.7]), np.array([1.3, -0.6]), np.array([0.2, 2.1])
        h = 1e-5

        def dK_dqd(q_, qd_):
            return mass_matrix(q_, p) @ qd_

        def lagr(q_, qd_):
            return 0.5 * qd_ @ mass_matrix(q_, p) @ qd_ - sum(potential_energies(q_, p))

        ddt = (dK_dqd(q + h * qd + 0.5 * h**2 * qdd, qd + h * qdd)
               - dK_dqd(q - h * qd + 0.5 * h**2 * qdd, qd - h * qdd)) / (2 * h)
        dL_dq = np.array([(lagr(q + h * e, qd) - lagr(q - h * e, qd)) / (2 * h) for e in np.eye(2)])
        generalized = ddt - dL_dq
        tau = inverse_dynamics(JointState(q, qd, qdd), p)
        np.testing.assert_allclose(tau + tip_jacobian(q, p).T @ p.force, generalized, atol=1e-6)

    @settings(max_examples=100)
    @given(vec2(angles), vec2(rates), vec2(rates), vec2(st.floats(-20, 20)))
    def test_power_balance(self, q, qd, qdd, F):
        p = ArmParameters(F=tuple(F))
        state = JointState(q, qd, qdd)
        tau = inverse_dynamics(state, p)
        E1dot, E2dot = energy_rates(state, p)
        E_total = total_energy(q, qd, p)
        lhs = qd @ tau + tip_power(q, qd, p)
        assert abs(lhs - (E1dot + E2dot)) < 1e-8 * (1 + abs(E_total))

    def test_energy_rate_matches_finite_difference_along_path(self):
        rng = np.random.default_rng(11)
        c = rng.normal(size=(2, 3))

        def path(t):
            q = c[:, 0] + c[:, 1] * np.sin(t) + c[:, 2] * np.cos(2 * t)
            qd = c[:, 1] * np.cos(t) - 2 * c[:, 2] * np.sin(2 * t)
            qdd = -c[:, 1] * np.sin(t) - 4 * c[:, 2] * np.cos(2 * t)
            return q, qd, qdd

        h = 1e-5
        for t in rng.uniform(0, 10, size=10):
            q, qd, qdd = path(t)
            rate = sum(energy_rates(JointState(q, qd, qdd), PARAMS))
            fd = (total_energy(*path(t + h)[:2]) - total_energy(*path(t - h)[:2])) / (2 * h)
            assert rate == pytest.approx(fd, rel=1e-5, abs=1e-7)

    @given(vec2(angles), vec2(rates), vec2(rates))
    def test_forward_substitution_recovers_acceleration(self, q, qd, qdd):
        p = ArmParameters(F=(0.0, -3.0))
        tau = inverse_dynamics(JointState(q, qd, qdd), p)
        np.testing.assert_allclose(forward_acceleration(q, qd, tau, p), qdd, atol=1e-10)

    def test_broadcasts_over_time_grid(self):
        rng = np.random.default_rng(2)
        q, qd, qdd = (rng.normal(size=(2, 7)) for _ in range(3))
        batched = inverse_dynamics(JointState(q, qd, qdd), PARAMS)
        for k in range(7):
            single = inverse_dynamics(JointState(q[:, k], qd[:, k], qdd[:, k]), PARAMS)
            np.testing.assert_allclose(batched[:, k], single, rtol=1e-14)
