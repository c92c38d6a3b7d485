"""Vector-valued spectral analysis of spatiotemporal data.

Extracts (generally non-separable) spatiotemporal patterns as eigenfunctions
of a Markov-normalized, delay-embedded Gaussian kernel operator acting on
the product of time samples and spatial grid points, with POD and NLSA
baselines for comparison.
"""

__version__ = "0.1.0"

from .dataset import (AnalysisWindow, FieldTrajectory, QuadratureWeights,
                      read_dataset, trim_for_delays, uniform_weights,
                      write_dataset)
from .ks import KsConfig, add_noise, generate_traveling_wave, integrate_ks, ks_initial_state
from .pipeline import VsaParams, VsaResult, run_vsa

__all__ = [
    "AnalysisWindow", "FieldTrajectory", "QuadratureWeights", "KsConfig",
    "VsaParams", "VsaResult", "add_noise", "generate_traveling_wave",
    "integrate_ks", "ks_initial_state", "read_dataset", "run_vsa",
    "trim_for_delays", "uniform_weights", "write_dataset",
]
