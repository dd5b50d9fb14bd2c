"""Minimal discs spanning quasicircles in hyperbolic 3-space, and the curvature bounds they satisfy."""

from .errors import QuasidiscError
from .mesh import SolverConfig, TriMesh, seed_mesh
from .solver import minimize_area
from .sweep import SweepSpec, VerificationReport, run_sweep, verify_bound
from .teichmuller import LaurentMap, bers_norm, sample_quasicircle

__version__ = "0.1.0"

__all__ = [
    "QuasidiscError",
    "SolverConfig",
    "TriMesh",
    "seed_mesh",
    "minimize_area",
    "SweepSpec",
    "VerificationReport",
    "run_sweep",
    "verify_bound",
    "LaurentMap",
    "bers_norm",
    "sample_quasicircle",
]
