"""Numerical laboratory for measurement, decoherence, Bohmian and GRW dynamics."""

from .hilbert import (DensityOperator, FiniteKet, GridWavefunction, WeightedEnsemble,
                      ensemble_to_operator, norm, operator_distance, partial_trace,
                      tensor, vec_distance)

__version__ = "0.1.0"

__all__ = [
    "DensityOperator",
    "FiniteKet",
    "GridWavefunction",
    "WeightedEnsemble",
    "ensemble_to_operator",
    "norm",
    "operator_distance",
    "partial_trace",
    "tensor",
    "vec_distance",
]
