"""Thermal states of lattice Dirac fermions under smoothly switched external potentials."""

from .linop import Covariance, HermitianOperator, fermi_factor, matrix_function
from .model import LatticeModel, PotentialProfile, build_dirac, build_potential
from .dynamics import compute_K, interaction_operator, switched_potential
from .kms import KmsSpec, t_series
from .entropy import entropy_report, rel_entropy_closed

__all__ = [
    "Covariance", "HermitianOperator", "fermi_factor", "matrix_function",
    "LatticeModel", "PotentialProfile", "build_dirac", "build_potential",
    "compute_K", "interaction_operator", "switched_potential",
    "KmsSpec", "t_series", "entropy_report", "rel_entropy_closed",
]
