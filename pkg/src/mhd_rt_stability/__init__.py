"""
MHD Rayleigh-Taylor Stability Solver

Spectral linear stability of two-layer viscous non-resistive MHD
Rayleigh-Taylor flow under a uniform steady magnetic field.
"""

__version__ = "0.1.0"

from .chebgrid import TwoLayerGrid, build
from .exceptions import (
    BracketError,
    ConfigurationError,
    ConvergenceError,
    DegenerateTraceError,
    EigensolveError,
    InvalidInputError,
    MHDStabilityError,
)
from .forms import QuadForms, ReducedMode, assemble_forms
from .growthrate import critical_field_estimate, dispersion, fixed_point, stability_map
from .model import FluidParams, MagneticField, Regime, classify_regime, critical_field
from .spectrum import alpha, inviscid_quotient

__all__ = [
    "BracketError",
    "ConfigurationError",
    "ConvergenceError",
    "DegenerateTraceError",
    "EigensolveError",
    "FluidParams",
    "InvalidInputError",
    "MHDStabilityError",
    "MagneticField",
    "QuadForms",
    "ReducedMode",
    "Regime",
    "TwoLayerGrid",
    "alpha",
    "assemble_forms",
    "build",
    "classify_regime",
    "critical_field",
    "critical_field_estimate",
    "dispersion",
    "fixed_point",
    "inviscid_quotient",
    "stability_map",
]
