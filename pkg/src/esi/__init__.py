"""Koopman-lifted output-only subspace identification."""
__version__ = "0.1.0"

from .analysis import (InertiaEstimate, InertiaSettings, ParticipationTable, estimate_inertia_window,
                       koopman_modes, participation_factors, track_inertia)
from .baselines import MatchReport, compare_modes, matrix_pencil, prony_multichannel
from .bundle import load_model, read_bundle, save_model, write_bundle
from .core import ESIConfig, ESIError, ESIModel, ModeSet, extract_modes, identify
from .lifting import Dictionary, LiftedSeries, LiftingError, build_dictionary, lift
from .measurements import Channel, MeasurementSet

__all__ = [
    "Channel", "Dictionary", "ESIConfig", "ESIError", "ESIModel", "InertiaEstimate", "InertiaSettings",
    "LiftedSeries", "LiftingError", "MatchReport", "MeasurementSet", "ModeSet", "ParticipationTable",
    "build_dictionary", "compare_modes", "estimate_inertia_window", "extract_modes", "identify",
    "koopman_modes", "lift", "load_model", "matrix_pencil", "participation_factors",
    "prony_multichannel", "read_bundle", "save_model", "track_inertia", "write_bundle",
]
