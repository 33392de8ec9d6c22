"""Pseudo-spectral Navier-Stokes on the periodic torus with critical-norm diagnostics."""

from critspace.spectral import (
    Grid,
    ScalarSpectralField,
    SpectralVectorField,
    dealias,
    from_modes,
    leray_project,
    make_grid,
    random_divfree_field,
    transform_to_physical,
    transform_to_spectral,
)
from critspace.norms import NormReport, fourier_l1, hs_norm, l2_norm, norm_report, x_norm
from critspace.dynamics import SolverConfig, TimeSeries, UnresolvedError, evolve

__all__ = [
    "Grid",
    "SolverConfig",
    "TimeSeries",
    "UnresolvedError",
    "evolve",
    "NormReport",
    "ScalarSpectralField",
    "SpectralVectorField",
    "dealias",
    "fourier_l1",
    "from_modes",
    "hs_norm",
    "l2_norm",
    "leray_project",
    "make_grid",
    "norm_report",
    "random_divfree_field",
    "transform_to_physical",
    "transform_to_spectral",
    "x_norm",
]

__version__ = "0.1.0"
