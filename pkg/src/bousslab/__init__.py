"""Numerical laboratory for standing waves of the generalized good Boussinesq system.

The package is organized around the pipeline

    grid -> model -> spectral -> evolution -> decomposition -> virial -> manifold

with a single CLI entry point (``bousslab``) binding everything together.
"""

from bousslab.grid import GridSpec, GridFunction
from bousslab.model import ModelParams, State

__all__ = ["GridSpec", "GridFunction", "ModelParams", "State"]
__version__ = "0.1.0"
