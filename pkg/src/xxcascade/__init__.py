"""Simulation and analysis of polarization-entangled photon pairs from the
biexciton-exciton cascade of a quantum dot."""

__version__ = "0.1.0"

from .cascade import (
    CascadeParams,
    ParameterError,
    fss_fidelity_scan,
    overhauser_average,
    predicted_visibilities,
    time_integrated_dm,
)
from .hardware import BeamSplitterModel, CoincidenceHistogram, DetectorModel, ExperimentClock, HistSpec
from .metrics import (
    VisibilityTriple,
    bell_parameters,
    concurrence,
    dominant_eigenstate,
    fidelity_from_visibilities,
    fidelity_to_psi_plus,
)
from .tomography import MeasurementSetting, TomographyCounts, canonical_settings, mle_reconstruct

__all__ = [
    "BeamSplitterModel",
    "CascadeParams",
    "CoincidenceHistogram",
    "DetectorModel",
    "ExperimentClock",
    "HistSpec",
    "MeasurementSetting",
    "ParameterError",
    "TomographyCounts",
    "VisibilityTriple",
    "bell_parameters",
    "canonical_settings",
    "concurrence",
    "dominant_eigenstate",
    "fidelity_from_visibilities",
    "fidelity_to_psi_plus",
    "fss_fidelity_scan",
    "mle_reconstruct",
    "overhauser_average",
    "predicted_visibilities",
    "time_integrated_dm",
]
