"""Simulation and verification laboratory for degenerate square-root
(Kimura-type) diffusions on the orthant product [0, inf)^n x R^m.

Subpackages: geometry (state space and anisotropic metric), model
(coefficient bundles and validators), engine (boundary-preserving path
simulation), girsanov (change-of-measure weights), diagnostics
(Monte-Carlo probes of the quantitative claims), holder (empirical
anisotropic norms), cli (config-driven orchestration).
"""

from ._kernels import backend as kernel_backend
from .engine import PathBundle, SimConfig, simulate_singular, simulate_standard
from .geometry import (
    RawPoint,
    RegionIndex,
    StatePoint,
    project,
    region_of,
    spacetime_distance,
    wf_coordinate_distance,
    wf_distance,
)
from .girsanov import WeightedPathBundle, accumulate_log_weight, ess, reweighted_expectation
from .model import CoefficientModel, DecomposedDiffusion, TestFunction, compute_q0
from .report import DiagnosticReport

__version__ = "0.1.0"

__all__ = [
    "CoefficientModel",
    "DecomposedDiffusion",
    "DiagnosticReport",
    "PathBundle",
    "RawPoint",
    "RegionIndex",
    "SimConfig",
    "StatePoint",
    "TestFunction",
    "WeightedPathBundle",
    "accumulate_log_weight",
    "compute_q0",
    "ess",
    "kernel_backend",
    "project",
    "region_of",
    "reweighted_expectation",
    "simulate_singular",
    "simulate_standard",
    "spacetime_distance",
    "wf_coordinate_distance",
    "wf_distance",
    "__version__",
]
