"""
Conditional wave function simulation of an electron crossing a resonant
tunnelling device, with a single cavity photon mode and prescribed
scattering events.
"""

from .errors import (ConfigurationError, DomainError, PopulationError, SimulationError,
                     TransitionError)
from .grid_potential import DEFAULT_CONSTANTS, PhysicalConstants, QuadratureGrid, SpatialGrid

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "DEFAULT_CONSTANTS", "DomainError", "PhysicalConstants",
           "PopulationError", "QuadratureGrid", "SimulationError", "SpatialGrid",
           "TransitionError"]
