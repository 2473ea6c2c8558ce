"""Adaptive BDDC solver laboratory for stabilized advection-diffusion
discretizations.

The package builds nonsymmetric interface Schur problems from P1 finite
element discretizations, constructs BDDC preconditioners whose primal space
is chosen adaptively from generalized eigenproblems on faces and edges, and
benchmarks the resulting preconditioned GMRES iteration.
"""

__version__ = "0.1.0"

from .adaptive import PrimalBasis, adaptive_primal_space
from .diagnostics import run_invariant_suite
from .harness import ExperimentConfig, load_config, run_case
from .solver import (
    SolveReport,
    build_preconditioner,
    direct_schur_solve,
    gmres_solve,
    recover_interior,
)

__all__ = [
    "ExperimentConfig",
    "PrimalBasis",
    "SolveReport",
    "adaptive_primal_space",
    "build_preconditioner",
    "direct_schur_solve",
    "gmres_solve",
    "load_config",
    "recover_interior",
    "run_case",
    "run_invariant_suite",
]
