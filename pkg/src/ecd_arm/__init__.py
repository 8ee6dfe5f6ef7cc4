"""Cycle-averaged energy-flow analysis of a two-link planar arm."""

from ._version import __version__
from .dynamics import ArmParameters, JointState, LinkEnergies
from .energyflow import CycleAverages, cycle_averages, label_sample
from .trajectory import BoundaryTask, FourierTrajectory, SamplerConfig, resolve_coefficients
from .variational import euler_residual, jacobi_conjugate_check, pq_matrices

__all__ = [
    "__version__",
    "ArmParameters",
    "BoundaryTask",
    "CycleAverages",
    "FourierTrajectory",
    "JointState",
    "LinkEnergies",
    "SamplerConfig",
    "cycle_averages",
    "euler_residual",
    "jacobi_conjugate_check",
    "label_sample",
    "pq_matrices",
    "resolve_coefficients",
]
