"""Vortex-filament energetics near the first critical field.

Submodules
----------
geometry   tube charts around a reference curve, sampled graphs, lengths
fields     Meissner curl for the ball, flux functionals, Biot-Savart, C_Omega estimator
isoflux    isoflux ratio, its second variation Q, spectra, Q_ell
renorm     renormalized interaction energy W_N and its minimizers
critfield  critical-field arithmetic and optimal filament count
profile    radial vortex profile, gamma, perforated-disk energy check
cli        batch front-end
"""

from .errors import (
    VFEError,
    DomainError,
    SingularityError,
    ConvergenceError,
    ConfigError,
    MissingMinWError,
)

__version__ = "0.1.0"

__all__ = [
    "VFEError",
    "DomainError",
    "SingularityError",
    "ConvergenceError",
    "ConfigError",
    "MissingMinWError",
]
