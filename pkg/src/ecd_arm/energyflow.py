"""Pointwise and cycle-averaged energy flow between the two links.

Link 1's balance reads ``dE1/dt = phi12 + tau1 * q1dot``; link 2 additionally
receives the tip-force power ``F . v_tip`` as external supply, so that
``dE2/dt = phi21 + tau2 * q2dot + F . v_tip`` and ``phi12 = -phi21`` pointwise.
Over a closed cycle the energies return to their initial values, which gives
``mean(phi12) = -mean(tau1 * q1dot)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (ArmParameters, energy_rates, inverse_dynamics,
                       link_energies, tip_power)
from .trajectory import FourierTrajectory, evaluate

DEFAULT_N_GRID = 1024
DEFAULT_DEAD_BAND = 1e-9


class DegenerateLabel(ValueError):
    """The averaged power flow is too close to zero to carry a sign."""

    def __init__(self, phi12bar: float, dead_band: float):
        super().__init__(f"|phi12bar| = {abs(phi12bar):.3g} W is below dead band {dead_band:g} W")
        self.phi12bar = phi12bar


@dataclass(frozen=True)
class CycleAverages:
    E1bar: float
    E2bar: float
    phi12bar: float
    W1bar: float
    W2bar: float
    Fbar: float
    n_grid: int
    # consistency diagnostics: grid means of dE1/dt, dE2/dt, phi12(t), phi12+phi21
    E1dot_bar: float = 0.0
    E2dot_bar: float = 0.0
    phi12_direct: float = 0.0
    antisymmetry_bar: float = 0.0

    @property
    def ratio(self) -> float:
        """``E1bar / E2bar``."""
        return self.E1bar / self.E2bar


@dataclass(frozen=True)
class Rule2Check:
    gamma: float
    sign_phi: int
    satisfied: bool
    margin: float


def _pointwise(traj, t, params):
    state = evaluate(traj, t)
    tau = inverse_dynamics(state, params)
    E1dot, E2dot = energy_rates(state, params)
    ptip = tip_power(state.q, state.qdot, params)
    return state, tau, E1dot, E2dot, ptip


def phi12_pointwise(traj: FourierTrajectory, t, params: ArmParameters):
    """Instantaneous power received by link 1 from link 2 (W)."""
    state, tau, E1dot, _, _ = _pointwise(traj, t, params)
    return E1dot - tau[0] * state.qdot[0]


def phi21_pointwise(traj: FourierTrajectory, t, params: ArmParameters):
    """Instantaneous power received by link 2 from link 1 (W)."""
    state, tau, _, E2dot, ptip = _pointwise(traj, t, params)
    return E2dot - tau[1] * state.qdot[1] - ptip


def time_grid(T: float, n_grid: int) -> np.ndarray:
    if n_grid < 64 or n_grid & (n_grid - 1):
        raise ValueError(f"n_grid must be a power of two >= 64, got {n_grid}")
    return np.arange(n_grid) * (T / n_grid)


def cycle_averages(traj: FourierTrajectory, params: ArmParameters,
                   n_grid: int = DEFAULT_N_GRID) -> CycleAverages:
    """Cycle means by the periodic trapezoid rule on a uniform grid.

    For smooth periodic integrands this converges geometrically in
    ``n_grid``; the endpoint is dropped since it duplicates ``t = 0``.
    """
    t = time_grid(traj.T, n_grid)
    state, tau, E1dot, E2dot, ptip = _pointwise(traj, t, params)
    en = link_energies(state, params)
    p1 = tau[0] * state.qdot[0]
    p2 = tau[1] * state.qdot[1]
    W1bar = float(np.mean(p1))
    phi12 = E1dot - p1
    phi21 = E2dot - p2 - ptip
    return CycleAverages(
        E1bar=float(np.mean(en.E1)),
        E2bar=float(np.mean(en.E2)),
        phi12bar=-W1bar,
        W1bar=W1bar,
        W2bar=float(np.mean(p2)),
        Fbar=float(np.mean(ptip)),
        n_grid=n_grid,
        E1dot_bar=float(np.mean(E1dot)),
        E2dot_bar=float(np.mean(E2dot)),
        phi12_direct=float(np.mean(phi12)),
        antisymmetry_bar=float(np.mean(phi12 + phi21)),
    )


def check_rule2(avg: CycleAverages, gamma12: float, gamma21: float,
                dead_band: float = DEFAULT_DEAD_BAND) -> Rule2Check:
    """Evaluate the weighted energy-flow inequality for the sign of ``phi12bar``.

    ``sign_phi`` is 0 inside the dead band, where the check holds trivially.
    """
    if not (gamma12 > 0 and gamma21 > 0):
        raise ValueError("gamma values must be positive")
    phi = avg.phi12bar
    if abs(phi) <= dead_band:
        return Rule2Check(gamma=gamma21, sign_phi=0, satisfied=True, margin=0.0)
    if phi < 0:
        margin = phi * (gamma12 * avg.E1bar - avg.E2bar)
        return Rule2Check(gamma=gamma12, sign_phi=-1, satisfied=margin <= 0, margin=margin)
    margin = phi * (avg.E1bar - gamma21 * avg.E2bar)
    return Rule2Check(gamma=gamma21, sign_phi=1, satisfied=margin <= 0, margin=margin)


def label_sample(traj: FourierTrajectory, params: ArmParameters,
                 n_grid: int = DEFAULT_N_GRID, dead_band: float = DEFAULT_DEAD_BAND):
    """Return ``(sign(phi12bar), phi12bar)``; raise DegenerateLabel near zero."""
    phi = cycle_averages(traj, params, n_grid).phi12bar
    if abs(phi) < dead_band:
        raise DegenerateLabel(phi, dead_band)
    return (1 if phi > 0 else -1), phi
