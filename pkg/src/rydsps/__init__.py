"""Rydberg-ensemble single-photon source: theory, time-tag simulation and analysis."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
