"""Spectral-partitioning 3D CNN for hyperspectral image pixel classification.

The band axis of each input patch is split into contiguous segments, every
segment runs through one weight-shared stack of strided 3D convolutions, and
the concatenated segment features feed a small fully-connected softmax head.
Implemented from scratch on numpy with hand-derived gradients, deterministic
training, and a schedulable (sequential / parallel / pipeline) inference
engine that renders classification maps.
"""

from .errors import (
    BoundsError,
    ConfigError,
    DegenerateInputError,
    FormatError,
    NumericError,
    RenderError,
    ShapeError,
    SpecPartError,
    SplitError,
)
from .model import (
    Model,
    ModelConfig,
    build_model,
    forward,
    load_checkpoint,
    predict_label,
    save_checkpoint,
    spectral_partition_bounds,
)
from .training import AdamState, Metrics, TrainConfig, evaluate, grad_check, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BoundsError",
    "ConfigError",
    "DegenerateInputError",
    "FormatError",
    "Metrics",
    "Model",
    "ModelConfig",
    "NumericError",
    "RenderError",
    "ShapeError",
    "SpecPartError",
    "SplitError",
    "TrainConfig",
    "build_model",
    "evaluate",
    "forward",
    "grad_check",
    "load_checkpoint",
    "predict_label",
    "save_checkpoint",
    "spectral_partition_bounds",
    "train",
    "__version__",
]
