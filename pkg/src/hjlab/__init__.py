"""Spectral toolkit for norm inflation in the viscous Hamilton-Jacobi equation."""

from .spectral_core import (
    BandOverflowError,
    FrequencyLattice,
    NumericalFailure,
    SpectralError,
    SpectralField,
    heat_propagate,
    partial_derivative,
    sparse_convolve,
    sup_norm,
)

__version__ = "0.1.0"

__all__ = [
    "BandOverflowError",
    "FrequencyLattice",
    "NumericalFailure",
    "SpectralError",
    "SpectralField",
    "heat_propagate",
    "partial_derivative",
    "sparse_convolve",
    "sup_norm",
]
