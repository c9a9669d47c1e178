"""Exact categorical-probability and information-geometry checks for toy autoregressive models."""

from . import armodel, catinfo, datagen, divergence, finstoch, harness, infogeo, spectral
from ._version import __version__
from .estimator import ARModelEstimator

__all__ = [
    "ARModelEstimator",
    "armodel",
    "catinfo",
    "datagen",
    "divergence",
    "finstoch",
    "harness",
    "infogeo",
    "spectral",
    "__version__",
]
