import numpy as np
import pytest

from ecd_arm.dynamics import ArmParameters, potential_energies
from ecd_arm.variational import (IndefiniteP, NoPositiveSamples, NotAnExtremum, Q_STAR,
                                 divergence_witness, energy_jets, estimate_gamma,
                                 euler_residual, fd_hessian, integrate_jacobi,
                                 jacobi_conjugate_check, jacobi_solution, pq_matrices,
                                 ratio_jet, ratio_value, reduce_gamma, static_ratio,
                                 unbounded_case_probe, verify_extremum)

PARAMS = ArmParameters()
ZERO = np.zeros(2)
P_REF = np.array([[0.051, 0.040], [0.040, 0.033]])
Q_REF = np.array([[0.298, 0.076], [0.076, 0.076]])


def static_ratio_fd_gradient(q, h=1e-6):
    r = lambda x: potential_energies(x, PARAMS)[1] / potential_energies(x, PARAMS)[0]  # noqa: E731
    return np.array([(r(q + h * e) - r(q - h * e)) / (2 * h) for e in np.eye(2)])


class TestJets:
    @pytest.mark.parametrize("seed", range(4))
    def test_energy_gradients_and_hessians(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=4)
        h = 1e-5
        for link in (0, 1):
            def E(x):
                return energy_jets(x[:2], x[2:], PARAMS)[link][0]
            _, grad, hess = energy_jets(z[:2], z[2:], PARAMS)[link]
            fd_grad = np.array([(E(z + h * e) - E(z - h * e)) / (2 * h) for e in np.eye(4)])
            np.testing.assert_allclose(grad, fd_grad, atol=1e-7)
            np.testing.assert_allclose(hess, fd_hessian(E, z, 1e-4), atol=1e-5)

    def test_ratio_value_agrees_with_jet(self):
        z = np.array([0.3, -0.4, 1.2, 0.7])
        assert ratio_jet(z[:2], z[2:], PARAMS)[0] == pytest.approx(ratio_value(z, PARAMS), rel=1e-14)

    def test_ratio_hessian_matches_finite_difference(self):
        z = np.array([-1.2, 0.5, 0.3, -0.8])
        _, _, hess = ratio_jet(z[:2], z[2:], PARAMS)
        fd = fd_hessian(lambda x: ratio_value(x, PARAMS), z, 1e-4)
        np.testing.assert_allclose(hess, fd, rtol=1e-5, atol=1e-7)


class TestEulerResidual:
    def test_vanishes_at_hanging_rest(self):
        assert np.linalg.norm(euler_residual(Q_STAR, ZERO, ZERO, PARAMS)) < 1e-10

    def test_nonzero_at_horizontal_rest(self):
        res = euler_residual((0.0, 0.0), ZERO, ZERO, PARAMS)
        V1 = potential_energies((0.0, 0.0), PARAMS)[0]
        assert res[1] == pytest.approx(PARAMS.m2 * PARAMS.g * PARAMS.lc2 / V1, rel=1e-12)
        assert np.linalg.norm(res) > 0.1

    def test_static_residual_is_gradient_of_potential_ratio(self):
        for q in np.random.default_rng(7).uniform(-np.pi, np.pi, size=(20, 2)):
            np.testing.assert_allclose(euler_residual(q, ZERO, ZERO, PARAMS),
                                       static_ratio_fd_gradient(q), atol=1e-6)

    def test_dynamic_residual_by_finite_differences(self):
        # F_q - d/dt F_qdot along q(t) = q0 + v t + a t^2 / 2
        q0, v, a = np.array([0.2, -0.9]), np.array([0.6, 1.1]), np.array([-0.4, 0.3])
        h = 1e-5

        def jet_at(t):
            return q0 + v * t + 0.5 * a * t**2, v + a * t

        grad_v = lambda t: ratio_jet(*jet_at(t), PARAMS)[1][2:]  # noqa: E731
        grad_q = ratio_jet(q0, v, PARAMS)[1][:2]
        fd = grad_q - (grad_v(h) - grad_v(-h)) / (2 * h)
        np.testing.assert_allclose(euler_residual(q0, v, a, PARAMS), fd, atol=1e-8)


class TestPQ:
    def test_reference_values(self):
        P, Q = pq_matrices(Q_STAR, PARAMS)
        np.testing.assert_allclose(P, P_REF, atol=0.002)
        np.testing.assert_allclose(Q, Q_REF, atol=0.002)

    def test_symmetric_and_positive_definite(self):
        P, Q = pq_matrices(Q_STAR, PARAMS)
        np.testing.assert_allclose(P, P.T, atol=1e-12)
        np.testing.assert_allclose(Q, Q.T, atol=1e-12)
        assert np.linalg.eigvalsh(P).min() > 0

    def test_hand_values(self):
        # P = D2/(2 E1) - E2 D1/(2 E1^2) and Q = Hess(V2/V1)/2 at rest
        P, Q = pq_matrices(Q_STAR, PARAMS)
        g = PARAMS.g
        E1, E2 = 1.64 * g, 0.75 * g
        assert P[0, 0] == pytest.approx(2.1025 / (2 * E1) - E2 * 1.0256 / (2 * E1**2), rel=1e-12)
        assert P[0, 1] == pytest.approx(1.2625 / (2 * E1), rel=1e-12)
        assert P[1, 1] == pytest.approx(1.0625 / (2 * E1), rel=1e-12)
        assert Q[0, 0] == pytest.approx(0.5 * (1.05 / 1.64 - 0.75 * 0.16 / 1.64**2), rel=1e-12)
        assert Q[0, 1] == pytest.approx(0.5 * 0.25 / 1.64, rel=1e-12)
        assert Q[1, 1] == pytest.approx(0.5 * 0.25 / 1.64, rel=1e-12)

    def test_not_an_extremum(self):
        with pytest.raises(NotAnExtremum):
            pq_matrices((0.0, 0.0), PARAMS)

    def test_finite_difference_cross_check(self):
        assert verify_extremum(PARAMS).fd_max_rel_error < 1e-5


class TestJacobi:
    def test_reference_matrices_have_no_conjugate_point(self):
        found, min_det = jacobi_conjugate_check(P_REF, Q_REF, t_max=50.0)
        assert not found and min_det > 0

    def test_scalar_sinh(self):
        t = np.linspace(0, 5, 11)
        np.testing.assert_allclose(jacobi_solution([[1.0]], [[1.0]], t)[:, 0, 0], np.sinh(t), rtol=1e-13)
        found, _ = jacobi_conjugate_check([[1.0]], [[1.0]], t_max=50.0)
        assert not found

    def test_oscillatory_case_has_conjugate_point(self):
        t = np.linspace(0, 4, 9)
        h = jacobi_solution(np.eye(2), -np.eye(2), t)
        np.testing.assert_allclose(h, np.sin(t)[:, None, None] * np.eye(2), atol=1e-14)
        assert jacobi_conjugate_check(np.eye(2), -np.eye(2), t_max=4.0)[0]
        assert not jacobi_conjugate_check(np.eye(2), -np.eye(2), t_max=3.0)[0]

    def test_mixed_modes_sign_change(self):
        P = np.diag([1.0, 2.0])
        Q = np.diag([1.0, -2.0])
        assert jacobi_conjugate_check(P, Q, t_max=3.5)[0]

    def test_closed_form_matches_integration(self):
        t = np.linspace(0, 10, 201)
        cf = jacobi_solution(P_REF, Q_REF, t)
        num = integrate_jacobi(P_REF, Q_REF, t)
        rel = np.linalg.norm(cf[1:] - num[1:], axis=(1, 2)) / np.linalg.norm(cf[1:], axis=(1, 2))
        assert rel.max() < 1e-6

    def test_closed_form_satisfies_initial_conditions(self):
        h = jacobi_solution(P_REF, Q_REF, [0.0, 1e-7])
        np.testing.assert_allclose(h[0], 0.0, atol=1e-15)
        np.testing.assert_allclose(h[1] / 1e-7, np.eye(2), atol=1e-6)

    def test_indefinite_p(self):
        with pytest.raises(IndefiniteP):
            jacobi_conjugate_check(np.diag([1.0, -1.0]), np.eye(2))


class TestReport:
    def test_reference_arm_passes(self):
        r = verify_extremum(PARAMS)
        assert r.passed
        assert r.all_modes_hyperbolic
        assert r.ratio_at_extremum == pytest.approx(1.64 / 0.75, rel=1e-12)

    def test_small_inertia_still_reports(self):
        r = verify_extremum(ArmParameters(I1=1e-6, I2=1e-6))
        assert set(r.to_dict()) >= {"P", "Q", "conjugate_point_found", "P_positive_definite"}


class TestGamma:
    def test_static_reference(self):
        assert static_ratio(PARAMS) == pytest.approx(2.1867, abs=1e-4)

    def test_deterministic_and_nested(self):
        a = estimate_gamma(5, 300)
        b = estimate_gamma(5, 300)
        assert a == b
        small = estimate_gamma(5, 100)
        assert a.gamma21_hat >= small.gamma21_hat
        assert a.count_positive + a.count_negative + a.count_degenerate == 300
        assert np.isfinite(a.gamma21_hat)

    def test_requires_enough_samples(self):
        with pytest.raises(ValueError):
            estimate_gamma(0, 99)

    def test_no_positive_samples(self):
        with pytest.raises(NoPositiveSamples):
            reduce_gamma([(-1.0, 2.0, np.zeros(11))] * 5, PARAMS)

    def test_reduce_picks_max_positive(self):
        terms = [(-1.0, 9.0, np.zeros(11)), (0.5, 1.5, np.ones(11)), (2.0, 1.2, np.zeros(11))]
        est = reduce_gamma(terms, PARAMS)
        assert est.gamma21_hat == 1.5 and est.argmax_index == 1
        assert not est.exceeds_static


class TestUnboundedProbe:
    def test_static_limit(self):
        assert unbounded_case_probe(PARAMS, 0.0) == pytest.approx(0.75 / 1.64, abs=1e-4)

    @pytest.mark.parametrize("s", [1.0, 2.0, 4.0])
    def test_tenfold_scale_increases(self, s):
        assert unbounded_case_probe(PARAMS, 10 * s) > unbounded_case_probe(PARAMS, s)

    def test_strictly_increasing(self):
        ratios = [unbounded_case_probe(PARAMS, s) for s in (1, 2, 4, 8)]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    def test_divergence(self):
        s = divergence_witness(PARAMS, threshold=100.0)
        assert unbounded_case_probe(PARAMS, s) > 100.0
