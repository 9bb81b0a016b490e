"""Robust artificial-noise beamforming for power-splitting SWIPT receivers.

Builds the perfect-CSI, bounded-error and outage-constrained designs as
conic programs, solves them with the bundled interior-point solver and
checks the resulting beamformers by simulation.
"""

__version__ = "0.1.0"

from .config import EHParams, ScenarioConfig, UncertaintyModel, bounded_scenario, statistical_scenario
from .problems import build_design
from .solver import SolverConfig, solve

__all__ = [
    "EHParams",
    "ScenarioConfig",
    "UncertaintyModel",
    "bounded_scenario",
    "statistical_scenario",
    "build_design",
    "SolverConfig",
    "solve",
    "__version__",
]
