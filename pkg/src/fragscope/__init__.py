"""Simulation and numerical checks for homogeneous interval fragmentations."""

__version__ = "0.1.0"

from .errors import FragscopeError, InvariantViolation, PreconditionError
from .exponent import ExponentProfile, phi, phi_derivatives, solve_pbar
from .model import DislocationModel, TruncationPolicy, make_policy, model_from_spec
from .seeding import derive_seed

__all__ = [
    "DislocationModel",
    "ExponentProfile",
    "FragscopeError",
    "InvariantViolation",
    "PreconditionError",
    "TruncationPolicy",
    "derive_seed",
    "make_policy",
    "model_from_spec",
    "phi",
    "phi_derivatives",
    "solve_pbar",
]
