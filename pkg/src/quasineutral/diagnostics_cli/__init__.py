"""Configuration, sweeps, dispersion measurement, export and the command line."""
from __future__ import annotations

from .config import RunConfig, load_config
from .dispersion import measure_dispersion, peak_frequency
from .sweep import SweepReport, convergence_sweep

__all__ = ["RunConfig", "load_config", "measure_dispersion", "peak_frequency", "SweepReport", "convergence_sweep"]
