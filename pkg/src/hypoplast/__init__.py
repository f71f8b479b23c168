"""Eulerian finite-strain hypoplasticity on a spectral Galerkin box."""

from .fields import Box, tensor_space, velocity_space
from .materials import Material, PlasticPotential, StoredEnergy, ViscousPotential
from .scenarios import Scenario, load, validate
from .simulation import Simulation

__all__ = [
    "Box",
    "Material",
    "PlasticPotential",
    "Scenario",
    "Simulation",
    "StoredEnergy",
    "ViscousPotential",
    "load",
    "tensor_space",
    "validate",
    "velocity_space",
]
__version__ = "0.1.0"
