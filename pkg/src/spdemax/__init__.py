"""Finite-difference and Monte Carlo tools for maximum principles of linear
stochastic heat equations with multiplicative noise."""

from .report import Report
from .spde_fd import (FieldSolution, SpaceGrid, SpdeProblem, cfl_grid, driver_increments, energy_residual,
                      solve_deterministic, solve_spde, stability_check)
from .maxprin import verify_barrier, verify_comparison, verify_envelope, verify_sign
from .weighted_norms import NormParams, exponent_constants, weighted_norm

__version__ = "0.1.0"
