"""Desk-scale fitting experiments: env-map compression and 5D field fitting."""

from .envmap import PROCEDURAL, EnvMap, envmap_lookup, procedural_envmap, procedural_radiance, texel_directions
from .sampling import fibonacci_sphere, sample_uniform_sphere
from .synthetic import SyntheticField5D, synthetic_field
from .training import (
    TrainConfig,
    TrainingError,
    TrainReport,
    latitude_error_profile,
    memory_footprint,
    metrics_from_predictions,
    polar_ratio,
    train_envmap,
    train_joint,
)

__all__ = [
    "PROCEDURAL", "EnvMap", "envmap_lookup", "procedural_envmap", "procedural_radiance", "texel_directions",
    "fibonacci_sphere", "sample_uniform_sphere", "SyntheticField5D", "synthetic_field", "TrainConfig",
    "TrainingError", "TrainReport", "latitude_error_profile", "memory_footprint", "metrics_from_predictions",
    "polar_ratio", "train_envmap", "train_joint",
]
