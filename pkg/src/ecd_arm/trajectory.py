"""Cyclic joint trajectories as truncated Fourier series.

Each joint follows

    q_j(t) = a_j0 + sum_k a_jk cos(k w t) + sum_k b_jk sin(k w t),   k = 1..m

with ``m = 4`` and ``w = 2 pi / T``. Rest-to-rest boundary conditions at
``t = 0`` (point A) and ``t = tb`` (point B) fix four coefficients per joint,
``{a_j0, a_j1, b_j1, b_j2}``; the remaining five per joint are free:

    free = [a12, a13, a14, b13, b14, a22, a23, a24, b23, b24]

and the 11-entry feature vector is ``free`` followed by ``T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import JointState

N_HARMONICS = 4
N_FREE = 10
N_FEATURES = 11
MAX_COND = 1e12

# (kind, harmonic) of the free coefficients of one joint
_FREE_TERMS = (("a", 2), ("a", 3), ("a", 4), ("b", 3), ("b", 4))


class SingularConstraintSystem(ValueError):
    """The boundary-condition system is ill-conditioned for this (T, tb)."""


class SamplingExhausted(RuntimeError):
    """No admissible trajectory found within the retry budget."""


@dataclass(frozen=True)
class BoundaryTask:
    qa: tuple[float, float] = (0.0, 0.0)
    qb: tuple[float, float] = (np.pi / 4, np.pi / 6)
    tb: float = 2.0
    T: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "qa", tuple(float(x) for x in self.qa))
        object.__setattr__(self, "qb", tuple(float(x) for x in self.qb))
        if not 0.0 < self.tb < self.T:
            raise ValueError(f"need 0 < tb < T, got tb={self.tb}, T={self.T}")


@dataclass(frozen=True)
class FourierTrajectory:
    """Per-joint Fourier coefficients.

    ``a`` has shape ``(2, m + 1)`` (``a[:, 0]`` is the mean), ``b`` has shape
    ``(2, m)`` with ``b[:, k - 1]`` multiplying ``sin(k w t)``.
    """

    a: np.ndarray
    b: np.ndarray
    T: float
    task: BoundaryTask | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != 2 or b.shape != (2, a.shape[1] - 1):
            raise ValueError(f"bad coefficient shapes a{a.shape}, b{b.shape}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "T", float(self.T))

    @property
    def omega(self) -> float:
        return 2.0 * np.pi / self.T

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @classmethod
    def constant(cls, q, T: float = 1.0, m: int = N_HARMONICS) -> "FourierTrajectory":
        a = np.zeros((2, m + 1))
        a[:, 0] = q
        return cls(a, np.zeros((2, m)), T)

    def free_coefficients(self) -> np.ndarray:
        out = []
        for j in range(2):
            for kind, k in _FREE_TERMS:
                out.append(self.a[j, k] if kind == "a" else self.b[j, k - 1])
        return np.array(out)

    def features(self) -> np.ndarray:
        return np.append(self.free_coefficients(), self.T)

    def evaluate(self, t) -> JointState:
        return evaluate(self, t)


def evaluate(traj: FourierTrajectory, t) -> JointState:
    """Positions, velocities and accelerations at time(s) ``t``.

    Scalar ``t`` gives arrays of shape ``(2,)``; an array of times gives
    ``(2, len(t))``.
    """
    t = np.asarray(t, dtype=float)
    tau = np.mod(t, traj.T)
    w = traj.omega
    k = np.arange(1, traj.m + 1)
    phase = np.multiply.outer(tau, k * w)  # (..., m)
    c, s = np.cos(phase), np.sin(phase)
    a0 = traj.a[:, 0]
    ak = traj.a[:, 1:]
    bk = traj.b
    kw = k * w
    q = a0[:, None] + ak @ c.reshape(-1, traj.m).T + bk @ s.reshape(-1, traj.m).T
    qd = (bk * kw) @ c.reshape(-1, traj.m).T - (ak * kw) @ s.reshape(-1, traj.m).T
    qdd = -((ak * kw**2) @ c.reshape(-1, traj.m).T + (bk * kw**2) @ s.reshape(-1, traj.m).T)
    shape = (2,) + t.shape
    return JointState(q.reshape(shape), qd.reshape(shape), qdd.reshape(shape))


def constraint_matrix(omega: float, tb: float) -> np.ndarray:
    """Boundary-condition matrix acting on ``[a0, a1, b1, b2]`` of one joint.

    Rows: q(0), q'(0)/w, q(tb), q'(tb)/w. Velocity rows are divided by ``w``
    so the conditioning depends on ``w tb`` only.
    """
    x = omega * tb
    return np.array([
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 2.0],
        [1.0, np.cos(x), np.sin(x), np.sin(2 * x)],
        [0.0, -np.sin(x), np.cos(x), 2 * np.cos(2 * x)],
    ])


def resolve_coefficients(free, task: BoundaryTask) -> FourierTrajectory:
    """Complete the 10 free coefficients into a trajectory meeting ``task``."""
    free = np.asarray(free, dtype=float)
    if free.shape != (N_FREE,):
        raise ValueError(f"expected {N_FREE} free coefficients, got shape {free.shape}")
    m = N_HARMONICS
    omega = 2.0 * np.pi / task.T
    A = constraint_matrix(omega, task.tb)
    cond = np.linalg.cond(A)
    if not cond <= MAX_COND:
        raise SingularConstraintSystem(
            f"constraint matrix condition number {cond:.3g} exceeds {MAX_COND:g} "
            f"(T={task.T}, tb={task.tb})")

    f = free.reshape(2, 5)
    a = np.zeros((2, m + 1))
    b = np.zeros((2, m))
    a[:, 2:] = f[:, :3]
    b[:, 2:] = f[:, 3:]
    # contributions of the free terms to each constraint row, per joint
    x = omega * task.tb
    ka, kb = np.arange(2, m + 1), np.arange(3, m + 1)
    ak, bk = a[:, 2:], b[:, 2:]
    rhs = np.array([
        np.asarray(task.qa) - ak.sum(axis=1),
        -bk @ kb,
        np.asarray(task.qb) - ak @ np.cos(ka * x) - bk @ np.sin(kb * x),
        ak @ (ka * np.sin(ka * x)) - bk @ (kb * np.cos(kb * x)),
    ])
    dep = np.linalg.solve(A, rhs)  # rows a0, a1, b1, b2; one column per joint
    a[:, 0], a[:, 1], b[:, 0], b[:, 1] = dep
    return FourierTrajectory(a, b, task.T, task)


@dataclass(frozen=True)
class SamplerConfig:
    """Ranges for random trajectories; ``tb = rho * T``."""

    coef_range: tuple[float, float] = (-1.0, 1.0)
    T_range: tuple[float, float] = (1.0, 10.0)
    rho: float = 0.5
    qa: tuple[float, float] = (0.0, 0.0)
    qb: tuple[float, float] = (np.pi / 4, np.pi / 6)
    max_attempts: int = 100

    def __post_init__(self):
        lo, hi = self.coef_range
        tlo, thi = self.T_range
        if not lo < hi:
            raise ValueError("coef_range must satisfy lo < hi")
        if not 0 < tlo <= thi:
            raise ValueError("T_range must satisfy 0 < lo <= hi")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")

    def task(self, T: float) -> BoundaryTask:
        return BoundaryTask(qa=self.qa, qb=self.qb, tb=self.rho * T, T=T)


class Sample(NamedTuple):
    trajectory: FourierTrajectory
    features: np.ndarray
    attempts: int


def index_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one sample index (order-free parallelism)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_random(seed: int, index: int, config: SamplerConfig = SamplerConfig()) -> Sample:
    rng = index_rng(seed, index)
    lo, hi = config.coef_range
    for attempt in range(1, config.max_attempts + 1):
        free = rng.uniform(lo, hi, size=N_FREE)
        T = rng.uniform(*config.T_range)
        try:
            traj = resolve_coefficients(free, config.task(T))
        except SingularConstraintSystem:
            continue
        return Sample(traj, np.append(free, T), attempt)
    raise SamplingExhausted(
        f"index {index} (seed {seed}): no admissible draw in {config.max_attempts} attempts")
