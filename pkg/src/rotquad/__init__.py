"""Dynamics of quadratic forms, with the rotating/magnetic 2D trap as the worked case."""

from . import oracle, quadcore, rotor2d
from .errors import (
    DegenerateRegimeError,
    FockConvergenceError,
    IndeterminateStructureError,
    NoDiscreteSpectrumError,
    NotDegenerateError,
    NotSeparableError,
    PropagatorOverflowError,
)
from .quadcore import QuadraticForm, assemble, propagator, spectral
from .rotor2d import PotentialParams, build_form, classify_region, eigenfrequencies

__all__ = [
    "DegenerateRegimeError", "FockConvergenceError", "IndeterminateStructureError",
    "NoDiscreteSpectrumError", "NotDegenerateError", "NotSeparableError",
    "PropagatorOverflowError", "PotentialParams", "QuadraticForm", "assemble",
    "build_form", "classify_region", "eigenfrequencies", "oracle", "propagator",
    "quadcore", "rotor2d", "spectral",
]
