"""Closed-form energetics and inverse dynamics of a two-link planar arm.

Conventions
-----------
``q1`` is measured from the world x axis, ``q2`` relative to link 1. Gravity
acts along -y and potential energy is referenced to the height ``H`` below
the shoulder, so ``V_i > 0`` whenever ``H >= l1 + l2``.

All functions broadcast over trailing axes: a joint vector may have shape
``(2,)`` for a single instant or ``(2, N)`` for a time grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """Raised when physical parameters violate their invariants."""


@dataclass(frozen=True)
class ArmParameters:
    """Physical constants of the arm. Defaults are the reference arm."""

    m1: float = 1.0
    m2: float = 1.0
    I1: float = 1.0
    I2: float = 1.0
    l1: float = 0.8
    l2: float = 1.0
    lc1: float = 0.16
    lc2: float = 0.25
    H: float = 1.8
    g: float = 9.81
    F: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        object.__setattr__(self, "F", tuple(float(f) for f in self.F))
        if len(self.F) != 2:
            raise ParameterError("F must be a 2-vector")
        for name in ("m1", "m2", "I1", "I2", "l1", "l2", "lc1", "lc2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be strictly positive, got {value}")
        if self.lc1 > self.l1 or self.lc2 > self.l2:
            raise ParameterError("centre-of-mass distances must not exceed link lengths")
        if not self.H >= self.l1 + self.l2:
            raise ParameterError(f"H={self.H} must be >= l1 + l2 = {self.l1 + self.l2}")
        if not np.isfinite(self.g) or not all(np.isfinite(self.F)):
            raise ParameterError("g and F must be finite")

    @property
    def force(self) -> np.ndarray:
        return np.asarray(self.F, dtype=float)


@dataclass(frozen=True)
class JointState:
    """Joint positions, velocities and accelerations (shape ``(2,)`` or ``(2, N)``)."""

    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray

    def __post_init__(self):
        for name in ("q", "qdot", "qddot"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape[:1] != (2,):
                raise ValueError(f"{name} must have leading dimension 2, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)

    @classmethod
    def static(cls, q) -> "JointState":
        q = np.asarray(q, dtype=float)
        return cls(q, np.zeros_like(q), np.zeros_like(q))


@dataclass(frozen=True)
class LinkEnergies:
    K1: np.ndarray
    K2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray

    @property
    def E1(self):
        return self.K1 + self.V1

    @property
    def E2(self):
        return self.K2 + self.V2


def mass_matrix_link1(params: ArmParameters) -> np.ndarray:
    d = params.m1 * params.lc1**2 + params.I1
    return np.array([[d, 0.0], [0.0, 0.0]])


def _link2_coeffs(params):
    # D2 = [[a + 2b cos q2, c + b cos q2], [c + b cos q2, c]]
    c = params.m2 * params.lc2**2 + params.I2
    a = params.m2 * params.l1**2 + c
    b = params.m2 * params.l1 * params.lc2
    return a, b, c


def mass_matrix_link2(q2, params: ArmParameters) -> np.ndarray:
    """Inertia matrix of link 2's kinetic energy; shape ``(2, 2) + q2.shape``."""
    a, b, c = _link2_coeffs(params)
    cq = np.cos(q2)
    d11 = a + 2 * b * cq
    d12 = c + b * cq
    d22 = c * np.ones_like(cq)
    return np.array([[d11, d12], [d12, d22]])


def mass_matrix(q, params: ArmParameters) -> np.ndarray:
    """Total joint-space inertia ``D1 + D2``."""
    q = np.asarray(q, dtype=float)
    D2 = mass_matrix_link2(q[1], params)
    D1 = mass_matrix_link1(params).reshape((2, 2) + (1,) * (D2.ndim - 2))
    return D1 + D2


def _quad(D, v, w=None):
    # v^T D w with broadcasting over trailing axes
    w = v if w is None else w
    return np.einsum("i...,ij...,j...->...", v, D, w)


def potential_energies(q, params: ArmParameters):
    q = np.asarray(q, dtype=float)
    s1 = np.sin(q[0])
    s12 = np.sin(q[0] + q[1])
    g = params.g
    V1 = params.m1 * g * (params.H + params.lc1 * s1)
    V2 = params.m2 * g * (params.l1 * s1 + params.lc2 * s12 + params.H)
    return V1, V2


def link_energies(state: JointState, params: ArmParameters) -> LinkEnergies:
    q, v = state.q, state.qdot
    D1 = mass_matrix_link1(params)
    K1 = 0.5 * D1[0, 0] * v[0] ** 2
    K2 = 0.5 * _quad(mass_matrix_link2(q[1], params), v)
    V1, V2 = potential_energies(q, params)
    return LinkEnergies(K1=K1, K2=K2, V1=V1, V2=V2)


def tip_jacobian(q, params: ArmParameters) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    s1, c1 = np.sin(q[0]), np.cos(q[0])
    s12, c12 = np.sin(q[0] + q[1]), np.cos(q[0] + q[1])
    l1, l2 = params.l1, params.l2
    return np.array([
        [-l1 * s1 - l2 * s12, -l2 * s12],
        [l1 * c1 + l2 * c12, l2 * c12],
    ])


def end_effector(q, qdot, params: ArmParameters):
    """Tip position and velocity in the world frame."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    l1, l2 = params.l1, params.l2
    pos = np.array([
        l1 * np.cos(q[0]) + l2 * np.cos(q[0] + q[1]),
        l1 * np.sin(q[0]) + l2 * np.sin(q[0] + q[1]),
    ])
    vel = np.einsum("ij...,j...->i...", tip_jacobian(q, params), qdot)
    return pos, vel


def gravity_gradient(q, params: ArmParameters) -> np.ndarray:
    """Gradient of ``V1 + V2`` with respect to ``q``."""
    q = np.asarray(q, dtype=float)
    c1 = np.cos(q[0])
    c12 = np.cos(q[0] + q[1])
    g = params.g
    g2 = params.m2 * g * params.lc2 * c12
    g1 = params.m1 * g * params.lc1 * c1 + params.m2 * g * params.l1 * c1 + g2
    return np.array([g1, g2])


def coriolis_matrix(q, qdot, params: ArmParameters) -> np.ndarray:
    """Christoffel-form Coriolis matrix; ``dD/dt - 2C`` is skew-symmetric."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    _, b, _ = _link2_coeffs(params)
    h = -b * np.sin(q[1])
    zero = np.zeros_like(h * qdot[0])
    return np.array([
        [h * qdot[1], h * (qdot[0] + qdot[1])],
        [-h * qdot[0], zero],
    ])


def inverse_dynamics(state: JointState, params: ArmParameters) -> np.ndarray:
    """Joint torques realising ``state`` against gravity and the tip force.

    Solves ``D q'' + C q' + grad V = tau + J^T F`` for ``tau``.
    """
    q, v, a = state.q, state.qdot, state.qddot
    D = mass_matrix(q, params)
    C = coriolis_matrix(q, v, params)
    J = tip_jacobian(q, params)
    F = params.force.reshape((2,) + (1,) * (q.ndim - 1))
    inertial = np.einsum("ij...,j...->i...", D, a) + np.einsum("ij...,j...->i...", C, v)
    return inertial + gravity_gradient(q, params) - np.einsum("ji...,j...->i...", J, F)


def forward_acceleration(q, qdot, tau, params: ArmParameters) -> np.ndarray:
    """Single-instant accelerations under torques ``tau`` (shape ``(2,)`` only)."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    rhs = (np.asarray(tau, dtype=float) + tip_jacobian(q, params).T @ params.force
           - coriolis_matrix(q, qdot, params) @ qdot - gravity_gradient(q, params))
    return np.linalg.solve(mass_matrix(q, params), rhs)


def energy_rates(state: JointState, params: ArmParameters):
    """Analytic time derivatives ``(dE1/dt, dE2/dt)`` along a joint trajectory."""
    q, v, a = state.q, state.qdot, state.qddot
    d1 = mass_matrix_link1(params)[0, 0]
    g = params.g
    E1dot = d1 * v[0] * a[0] + params.m1 * g * params.lc1 * np.cos(q[0]) * v[0]

    _, b, _ = _link2_coeffs(params)
    D2 = mass_matrix_link2(q[1], params)
    s2 = np.sin(q[1])
    # 0.5 v^T (dD2/dq2) v * q2dot
    dD2_quad = -b * s2 * (2 * v[0] ** 2 + 2 * v[0] * v[1])
    c1 = np.cos(q[0])
    c12 = np.cos(q[0] + q[1])
    dV2 = params.m2 * g * (params.l1 * c1 * v[0] + params.lc2 * c12 * (v[0] + v[1]))
    E2dot = _quad(D2, v, a) + 0.5 * dD2_quad * v[1] + dV2
    return E1dot, E2dot


def tip_power(q, qdot, params: ArmParameters):
    """Power delivered by the external tip force, ``F . v_tip``."""
    _, vel = end_effector(q, qdot, params)
    F = params.force.reshape((2,) + (1,) * (np.ndim(q) - 1))
    return np.sum(F * vel, axis=0)
