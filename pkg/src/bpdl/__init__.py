"""Spatial birth and death process with logistic competition: simulation and analysis."""

__version__ = "0.1.0"

from .domain import SpatialDomain
from .errors import BPDLError
from .kernels import Kernel
from .model import LOST, ModelParams, Population, RateField, competition_sum, make_params, poisson_configuration, sample_dispersal
from .rng import Stream

__all__ = [
    "BPDLError",
    "Kernel",
    "LOST",
    "ModelParams",
    "Population",
    "RateField",
    "SpatialDomain",
    "Stream",
    "competition_sum",
    "make_params",
    "poisson_configuration",
    "sample_dispersal",
]
