"""Ground-class prediction from shield telemetry by kriging / random-forest fusion."""

from .datagen import TunnelSpec, generate_tunnel, section_split
from .forest import BACKEND, Forest, Hyperparams, fit_forest
from .fusion import FusionConfig, KrfPrediction, run_krf, stack_predictions
from .kriging import extrapolate
from .preprocess import FEATURES, GroundVector, Telemetry, filter_nonworking
from .variogram import VariogramModel, empirical_semivariogram, fit_model

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "FEATURES", "Forest", "FusionConfig", "GroundVector", "Hyperparams",
    "KrfPrediction", "Telemetry", "TunnelSpec", "VariogramModel", "empirical_semivariogram",
    "extrapolate", "filter_nonworking", "fit_forest", "fit_model", "generate_tunnel",
    "run_krf", "section_split", "stack_predictions",
]
