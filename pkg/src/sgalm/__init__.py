"""Riemannian augmented-Lagrangian beamforming for near-field ISAC.

A joint communication and sensing transmitter with a uniform linear array
serves K single-antenna users and illuminates N targets. The package builds
near-field channels, evaluates SINRs and beampattern gains, and maximises
the sum rate under sensing-gain, SINR and power constraints on a unit
sphere.
"""

from .model import ConfigError, Problem, ScenarioConfig, dbm_to_watts, generate_scenario, watts_to_dbm
from .optimizer import SolveResult, SolverOptions, solve

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Problem",
    "ScenarioConfig",
    "SolveResult",
    "SolverOptions",
    "dbm_to_watts",
    "generate_scenario",
    "solve",
    "watts_to_dbm",
    "__version__",
]
