"""Galerkin simulator and verification harness for a regularised compressible
viscous fluid with smoothed Coulomb friction on the walls of a periodic channel."""

__version__ = "0.1.0"

from .constitutive import (MollifiedPotential, PotentialSpec, PressureLaw, SmoothedAbsolute,
                           conjugate, eval_potential, fenchel_residual, grad_j_delta,
                           grad_potential, j_delta, mollify, pressure_eval)
from .density import (ContinuityParams, DensityField, advance_density, density_bounds_check,
                      entropy_balance)
from .exceptions import (ArtifactError, BlowUpError, ConfigError, ConjugateError, DomainError,
                         FixedPointError, FrictionFlowError, MassMatrixError, PositivityError,
                         ResolutionError, SolverError)
from .geometry import (ChannelDomain, GalerkinSpace, TraceQuadrature, boundary_trace,
                       build_space, evaluate_velocity)
from .momentum import (ProblemData, assemble_forcing, assemble_mass, fixed_point_step,
                       initial_projection)
from .simulation import Trajectory, simulate

__all__ = [
    "ArtifactError", "BlowUpError", "ChannelDomain", "ConfigError", "ConjugateError",
    "ContinuityParams", "DensityField", "DomainError", "FixedPointError", "FrictionFlowError",
    "GalerkinSpace", "MassMatrixError", "MollifiedPotential", "PositivityError",
    "PotentialSpec", "PressureLaw", "ProblemData", "ResolutionError", "SmoothedAbsolute",
    "SolverError", "TraceQuadrature", "Trajectory", "advance_density", "assemble_forcing",
    "assemble_mass", "boundary_trace", "build_space", "conjugate", "density_bounds_check",
    "entropy_balance", "eval_potential", "evaluate_velocity", "fenchel_residual",
    "fixed_point_step", "grad_j_delta", "grad_potential", "initial_projection", "j_delta",
    "mollify", "pressure_eval", "simulate",
]
