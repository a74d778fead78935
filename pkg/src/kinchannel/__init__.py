"""kinchannel: multi-scale kinetic boundary-layer expansions in a channel.

Builds the interior fluid hierarchy, viscous boundary layers, and kinetic
half-space layers of a small-Knudsen-number channel flow, composes them
into an approximate distribution function, and measures the order in
epsilon of the defect this composite leaves in the kinetic equation.
"""

from .config import ConfigError, ExpansionParameters, RunConfig, Tolerances
from .velocity import (GridResolutionError, KineticFunction, MacroState,
                       VelocityGrid, burnett, micro_quadratic, moments,
                       project_P)
from .collision import (CollisionOperator, MicroPreconditionError,
                        SolverError, nu)

__all__ = [
    "ConfigError", "ExpansionParameters", "RunConfig", "Tolerances",
    "GridResolutionError", "KineticFunction", "MacroState", "VelocityGrid",
    "burnett", "micro_quadratic", "moments", "project_P",
    "CollisionOperator", "MicroPreconditionError", "SolverError", "nu",
]

__version__ = "0.1.0"
