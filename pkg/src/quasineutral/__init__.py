"""Spectral solver and diagnostics for the quasineutral limit of multifluid Euler-Maxwell plasmas."""
from __future__ import annotations

__version__ = "0.1.0"

from .spectral_core import ConfigurationError, Lattice  # noqa: E402
from .plasma_layers import FluidLayer, LayerStack  # noqa: E402
from .field_decomposition import EMState, helmholtz_decompose  # noqa: E402
from .evolution import InitialData, Trajectory, picard_iterate, simulate  # noqa: E402
from .filtering_correctors import extract_limit_correctors, filter_H, filtered_fields  # noqa: E402
from .emhd_limit import emhd_simulate, resonance_set  # noqa: E402

__all__ = [
    "__version__",
    "ConfigurationError",
    "Lattice",
    "FluidLayer",
    "LayerStack",
    "EMState",
    "helmholtz_decompose",
    "InitialData",
    "Trajectory",
    "simulate",
    "picard_iterate",
    "filter_H",
    "filtered_fields",
    "extract_limit_correctors",
    "emhd_simulate",
    "resonance_set",
]
