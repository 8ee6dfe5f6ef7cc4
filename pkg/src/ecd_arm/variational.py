"""Second-variation analysis of the energy-ratio functional.

The integrand is ``F(q, qdot) = E2 / E1``. Its stationary points satisfy the
Euler-Lagrange equations; a static extremum is a local minimum when the
kinetic Hessian ``P = F_vv / 2`` is positive definite and the Jacobi system
``P h'' = Q h`` with ``h(0) = 0, h'(0) = I`` has no conjugate point, i.e.
``det h(t)`` never vanishes for ``t > 0``.

Derivatives of ``E1`` and ``E2`` are closed-form; the quotient rule lifts
them to ``F``. Finite differences are used only as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh

from .dynamics import ArmParameters, JointState, _link2_coeffs, link_energies, mass_matrix_link1
from .energyflow import DEFAULT_DEAD_BAND, DEFAULT_N_GRID, cycle_averages
from .trajectory import FourierTrajectory, SamplerConfig, sample_random

Q_STAR = (-np.pi / 2, 0.0)
EXTREMUM_TOL = 1e-8
DET_ZERO_TOL = 1e-12


class NotAnExtremum(ValueError):
    pass


class IndefiniteP(ValueError):
    pass


class NoPositiveSamples(RuntimeError):
    pass


def energy_jets(q, qdot, params: ArmParameters):
    """Value, gradient and Hessian of ``E1`` and ``E2`` in ``z = (q1, q2, v1, v2)``."""
    q1, q2 = map(float, q)
    v1, v2 = map(float, qdot)
    g = params.g
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    s2, c2 = math.sin(q2), math.cos(q2)

    d1 = mass_matrix_link1(params)[0, 0]
    k1 = params.m1 * g * params.lc1
    E1 = 0.5 * d1 * v1**2 + params.m1 * g * params.H + k1 * s1
    g1 = np.array([k1 * c1, 0.0, d1 * v1, 0.0])
    H1 = np.zeros((4, 4))
    H1[0, 0] = -k1 * s1
    H1[2, 2] = d1

    a, b, c = _link2_coeffs(params)
    A = a + 2 * b * c2
    B = c + b * c2
    mg = params.m2 * g
    E2 = (0.5 * (A * v1**2 + 2 * B * v1 * v2 + c * v2**2)
          + mg * (params.l1 * s1 + params.lc2 * s12 + params.H))
    g2 = np.array([
        mg * (params.l1 * c1 + params.lc2 * c12),
        -b * s2 * (v1**2 + v1 * v2) + mg * params.lc2 * c12,
        A * v1 + B * v2,
        B * v1 + c * v2,
    ])
    H2 = np.zeros((4, 4))
    H2[0, 0] = -mg * (params.l1 * s1 + params.lc2 * s12)
    H2[0, 1] = H2[1, 0] = -mg * params.lc2 * s12
    H2[1, 1] = -b * c2 * (v1**2 + v1 * v2) - mg * params.lc2 * s12
    H2[1, 2] = H2[2, 1] = -b * s2 * (2 * v1 + v2)
    H2[1, 3] = H2[3, 1] = -b * s2 * v1
    H2[2, 2] = A
    H2[2, 3] = H2[3, 2] = B
    H2[3, 3] = c
    return (E1, g1, H1), (E2, g2, H2)


def ratio_jet(q, qdot, params: ArmParameters):
    """Value, gradient and Hessian of ``F = E2 / E1`` in ``z = (q, qdot)``."""
    (E1, g1, H1), (E2, g2, H2) = energy_jets(q, qdot, params)
    if not E1 > 0:
        raise ValueError("E1 must be positive")
    F = E2 / E1
    grad = g2 / E1 - E2 * g1 / E1**2
    hess = (H2 / E1
            - (np.outer(g2, g1) + np.outer(g1, g2)) / E1**2
            - E2 * H1 / E1**2
            + 2 * E2 * np.outer(g1, g1) / E1**3)
    return F, grad, hess


def ratio_value(z, params: ArmParameters) -> float:
    """``E2 / E1`` at ``z = (q1, q2, v1, v2)``, from the dynamics module."""
    z = np.asarray(z, dtype=float)
    en = link_energies(JointState(z[:2], z[2:], np.zeros(2)), params)
    return float(en.E2 / en.E1)


def fd_hessian(fun, z, step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    z = np.asarray(z, dtype=float)
    n = z.size
    out = np.empty((n, n))
    eye = np.eye(n) * step
    for i in range(n):
        for k in range(i, n):
            fpp = fun(z + eye[i] + eye[k])
            fpm = fun(z + eye[i] - eye[k])
            fmp = fun(z - eye[i] + eye[k])
            fmm = fun(z - eye[i] - eye[k])
            out[i, k] = out[k, i] = (fpp - fpm - fmp + fmm) / (4 * step**2)
    return out


def euler_residual(q, qdot, qddot, params: ArmParameters) -> np.ndarray:
    """Euler-Lagrange residual ``F_q - d/dt F_qdot`` of ``F = E2 / E1``.

    The total derivative is expanded through the jet:
    ``d/dt F_qdot = F_qdot,q qdot + F_qdot,qdot qddot``. At a static point the
    residual equals the gradient of ``V2 / V1``.
    """
    qdot = np.asarray(qdot, dtype=float)
    qddot = np.asarray(qddot, dtype=float)
    _, grad, hess = ratio_jet(q, qdot, params)
    ddt_Fv = hess[2:, :2] @ qdot + hess[2:, 2:] @ qddot
    return grad[:2] - ddt_Fv


def pq_matrices(q_star, params: ArmParameters):
    """Accessory-problem matrices ``P = F_vv / 2`` and ``Q = F_qq / 2`` at rest.

    Raises NotAnExtremum unless ``q_star`` is a static stationary point.
    """
    zero = np.zeros(2)
    res = euler_residual(q_star, zero, zero, params)
    if not np.linalg.norm(res) < EXTREMUM_TOL:
        raise NotAnExtremum(f"Euler residual {res} at q={tuple(q_star)} exceeds {EXTREMUM_TOL:g}")
    _, _, hess = ratio_jet(q_star, zero, params)
    # the d/dt F_qv term of Q vanishes at rest
    P = 0.5 * hess[2:, 2:]
    Q = 0.5 * hess[:2, :2]
    return 0.5 * (P + P.T), 0.5 * (Q + Q.T)


def is_positive_definite(P) -> bool:
    try:
        np.linalg.cholesky(np.asarray(P, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


def _modes(P, Q):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if not is_positive_definite(P):
        raise IndefiniteP(f"P is not positive definite: eigenvalues {np.linalg.eigvalsh(P)}")
    lam, V = eigh(Q, P)  # Q V = P V diag(lam), V^T P V = I
    return lam, V


def _mode_functions(lam, t):
    """Solutions of ``y'' = lam y`` with ``y(0) = 0, y'(0) = 1``; shape (len(t), n)."""
    t = np.asarray(t, dtype=float)[:, None]
    out = np.empty((t.shape[0], lam.size))
    for i, l in enumerate(lam):
        r = math.sqrt(abs(l))
        if l > 0:
            out[:, i] = np.sinh(r * t[:, 0]) / r
        elif l < 0:
            out[:, i] = np.sin(r * t[:, 0]) / r
        else:
            out[:, i] = t[:, 0]
    return out


def jacobi_solution(P, Q, t) -> np.ndarray:
    """Closed-form principal solution ``h(t)`` with shape ``(len(t), n, n)``."""
    lam, V = _modes(P, Q)
    f = _mode_functions(lam, np.atleast_1d(t))
    Vinv = np.linalg.inv(V)
    return np.einsum("ik,tk,kj->tij", V, f, Vinv)


def integrate_jacobi(P, Q, t, rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """Numerically integrate ``P h'' = Q h`` from ``h(0) = 0, h'(0) = I``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = P.shape[0]
    M = np.linalg.solve(P, Q)
    t = np.atleast_1d(np.asarray(t, dtype=float))

    def rhs(_, y):
        h = y[: n * n].reshape(n, n)
        hd = y[n * n:].reshape(n, n)
        return np.concatenate([hd.ravel(), (M @ h).ravel()])

    y0 = np.concatenate([np.zeros(n * n), np.eye(n).ravel()])
    sol = solve_ivp(rhs, (0.0, float(t.max())), y0, method="DOP853",
                    t_eval=t, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"Jacobi integration failed: {sol.message}")
    return sol.y[: n * n].T.reshape(-1, n, n)


def det_h(P, Q, t) -> np.ndarray:
    """``det h(t)`` from the modal product (``det V det V^-1 = 1``)."""
    lam, _ = _modes(P, Q)
    return np.prod(_mode_functions(lam, np.atleast_1d(t)), axis=1)


def jacobi_conjugate_check(P, Q, t_max: float = 50.0, n_scan: int = 5000):
    """Scan ``det h`` on ``(0, t_max]`` for a conjugate point.

    Returns ``(conjugate_point_found, min_abs_det_h)``. A conjugate point is
    flagged on a sign change of ``det h``, on ``|det h| < 1e-12``, or on a
    sign change of any modal factor of ``det h`` (repeated roots touch zero
    without changing the sign of the product).
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    ts = np.linspace(t_max / n_scan, t_max, n_scan)
    lam, _ = _modes(P, Q)
    with np.errstate(over="ignore"):
        factors = _mode_functions(lam, ts)
        d = np.prod(factors, axis=1)
    finite = d[np.isfinite(d)]
    signs = np.sign(d)
    factor_flip = np.any(np.sign(factors) != np.sign(factors[0]))
    found = bool(np.any(np.abs(finite) < DET_ZERO_TOL) or np.any(signs != signs[0]) or factor_flip)
    return found, float(np.min(np.abs(finite)))


@dataclass
class ExtremumReport:
    q_star: list
    euler_residual: list
    P: list
    Q: list
    P_positive_definite: bool
    conjugate_point_found: bool
    min_abs_det_h: float
    t_scan_max: float
    ratio_at_extremum: float
    modal_eigenvalues: list
    all_modes_hyperbolic: bool
    fd_max_rel_error: float

    @property
    def passed(self) -> bool:
        return (np.linalg.norm(self.euler_residual) < EXTREMUM_TOL
                and self.P_positive_definite and not self.conjugate_point_found)

    def to_dict(self) -> dict:
        return asdict(self)


def _fd_cross_check(q_star, params, P, Q, step=1e-4):
    z = np.concatenate([np.asarray(q_star, dtype=float), np.zeros(2)])
    fd = 0.5 * fd_hessian(lambda x: ratio_value(x, params), z, step)
    analytic = np.block([[Q, np.zeros((2, 2))], [np.zeros((2, 2)), P]])
    # q-v cross terms vanish at rest and carry no scale of their own
    scale = np.maximum(np.abs(analytic), np.max(np.abs(analytic)) * 1e-3)
    return float(np.max(np.abs(fd - analytic) / scale))


def verify_extremum(params: ArmParameters, q_star=Q_STAR, t_max: float = 50.0,
                    n_scan: int = 5000) -> ExtremumReport:
    """Run the full sufficiency check without raising on a failed step."""
    zero = np.zeros(2)
    q_star = np.asarray(q_star, dtype=float)
    res = euler_residual(q_star, zero, zero, params)
    _, _, hess = ratio_jet(q_star, zero, params)
    P = 0.5 * hess[2:, 2:]
    Q = 0.5 * hess[:2, :2]
    pd = is_positive_definite(P)
    if pd:
        found, min_det = jacobi_conjugate_check(P, Q, t_max, n_scan)
        lam, _ = _modes(P, Q)
    else:
        found, min_det, lam = True, 0.0, np.linalg.eigvals(np.linalg.solve(P, Q)).real
    en = link_energies(JointState.static(q_star), params)
    return ExtremumReport(
        q_star=q_star.tolist(),
        euler_residual=res.tolist(),
        P=P.tolist(),
        Q=Q.tolist(),
        P_positive_definite=pd,
        conjugate_point_found=found,
        min_abs_det_h=min_det,
        t_scan_max=float(t_max),
        ratio_at_extremum=float(en.E1 / en.E2),
        modal_eigenvalues=np.sort(lam).tolist(),
        all_modes_hyperbolic=bool(np.all(lam > 0)),
        fd_max_rel_error=_fd_cross_check(q_star, params, P, Q),
    )


def static_ratio(params: ArmParameters, q=Q_STAR) -> float:
    """``E1 / E2`` of the arm held at rest at ``q``."""
    en = link_energies(JointState.static(np.asarray(q, dtype=float)), params)
    return float(en.E1 / en.E2)


@dataclass
class GammaEstimate:
    gamma21_hat: float
    n_samples: int
    argmax_features: list
    argmax_index: int
    count_positive: int
    count_negative: int
    count_degenerate: int
    static_reference: float
    exceeds_static: bool

    def to_dict(self) -> dict:
        return asdict(self)


def gamma_terms(seed: int, index: int, config: SamplerConfig, params: ArmParameters,
                n_grid: int = DEFAULT_N_GRID):
    """``(phi12bar, E1bar / E2bar, features)`` for one sampled trajectory."""
    traj, x, _ = sample_random(seed, index, config)
    avg = cycle_averages(traj, params, n_grid)
    return avg.phi12bar, avg.ratio, x


def reduce_gamma(terms, params: ArmParameters, dead_band: float = DEFAULT_DEAD_BAND) -> GammaEstimate:
    """Fold per-index ``gamma_terms`` (in index order) into an estimate."""
    best, best_idx, best_x = -np.inf, -1, None
    pos = neg = deg = n = 0
    for idx, (phi, ratio, x) in enumerate(terms):
        n += 1
        if abs(phi) < dead_band:
            deg += 1
            continue
        if phi < 0:
            neg += 1
            continue
        pos += 1
        if ratio > best:
            best, best_idx, best_x = ratio, idx, x
    if pos == 0:
        raise NoPositiveSamples(f"none of {n} samples has phi12bar > {dead_band:g} W")
    ref = static_ratio(params)
    return GammaEstimate(
        gamma21_hat=float(best),
        n_samples=n,
        argmax_features=np.asarray(best_x).tolist(),
        argmax_index=best_idx,
        count_positive=pos,
        count_negative=neg,
        count_degenerate=deg,
        static_reference=ref,
        exceeds_static=bool(best > ref),
    )


def estimate_gamma(seed: int, n: int, config: SamplerConfig = SamplerConfig(),
                   params: ArmParameters = ArmParameters(), n_grid: int = DEFAULT_N_GRID,
                   dead_band: float = DEFAULT_DEAD_BAND) -> GammaEstimate:
    """Sampled supremum of ``E1bar / E2bar`` over trajectories with ``phi12bar > 0``."""
    if n < 100:
        raise ValueError("estimate_gamma needs n >= 100")
    terms = (gamma_terms(seed, i, config, params, n_grid) for i in range(n))
    return reduce_gamma(terms, params, dead_band)


def witness_trajectory(velocity_scale: float) -> FourierTrajectory:
    """Link 1 held at -pi/2 while link 2 swings as ``s * sin(t)``."""
    a = np.zeros((2, 5))
    b = np.zeros((2, 4))
    a[0, 0] = -np.pi / 2
    b[1, 0] = velocity_scale
    return FourierTrajectory(a, b, 2 * np.pi)


def unbounded_case_probe(params: ArmParameters, velocity_scale: float,
                         n_grid: int = DEFAULT_N_GRID) -> float:
    """``E2bar / E1bar`` along the witness family; grows without bound in ``s``."""
    if velocity_scale < 0:
        raise ValueError("velocity_scale must be non-negative")
    avg = cycle_averages(witness_trajectory(velocity_scale), params, n_grid)
    return avg.E2bar / avg.E1bar


def divergence_witness(params: ArmParameters, threshold: float = 100.0,
                       start: float = 1.0, max_doublings: int = 60) -> float:
    """Smallest doubled velocity scale whose probe ratio exceeds ``threshold``."""
    s = start
    for _ in range(max_doublings):
        if unbounded_case_probe(params, s) > threshold:
            return s
        s *= 2
    raise RuntimeError(f"ratio stayed below {threshold} up to s={s}")
