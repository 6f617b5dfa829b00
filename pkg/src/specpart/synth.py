"""Synthetic datasets and toy configurations for tests and smoke runs.

Everything here is seeded and deterministic. The two-class patch set puts a
Gaussian reflectance bump at a class-specific band position on top of a
shared smooth baseline, which makes the classes cleanly separable while
keeping values in a realistic [0, 1] range.
"""

from __future__ import annotations

import numpy as np

from .data import HsiCube, LabelMap
from .model import ModelConfig
from .tensor import Tensor


def two_class_patch_set(
    n_samples: int = 40,
    bands: int = 200,
    patch_size: int = 5,
    seed: int = 0,
    bump_height: float = 0.5,
) -> list[tuple[Tensor, int]]:
    """Alternating-class (patch, label) pairs separated by a spectral bump."""
    rng = np.random.default_rng(seed)
    z = np.arange(bands)
    base = 0.40 + 0.08 * np.sin(6.0 * np.pi * z / bands)
    width = max(bands / 25.0, 2.0)
    bumps = [
        bump_height * np.exp(-((z - bands / 4.0) ** 2) / (2.0 * width**2)),
        bump_height * np.exp(-((z - 3.0 * bands / 4.0) ** 2) / (2.0 * width**2)),
    ]
    samples = []
    for i in range(n_samples):
        label = i % 2
        spectrum = base + bumps[label]
        patch = spectrum[None, None, :] + rng.normal(0.0, 0.02, (patch_size, patch_size, bands))
        samples.append((patch, label))
    return samples


def toy_scene(
    height: int = 16,
    width: int = 16,
    bands: int = 12,
    n_classes: int = 3,
    seed: int = 0,
) -> tuple[HsiCube, LabelMap]:
    """A fully labeled scene of horizontal class stripes with bumped spectra."""
    rng = np.random.default_rng(seed)
    z = np.arange(bands)
    labels = np.zeros((height, width), dtype=np.uint16)
    data = np.empty((height, width, bands))
    width_b = max(bands / (2.0 * n_classes), 1.0)
    for yy in range(height):
        cls = (yy * n_classes) // height  # 0-based stripe class
        center = (cls + 0.5) * bands / n_classes
        spectrum = 0.35 + 0.45 * np.exp(-((z - center) ** 2) / (2.0 * width_b**2))
        labels[yy, :] = cls + 1
        data[yy] = spectrum[None, :] + rng.normal(0.0, 0.03, (width, bands))
    cube = HsiCube(height=height, width=width, bands=bands, data=data, name="toy")
    label_map = LabelMap(
        height=height,
        width=width,
        labels=labels,
        class_names=[f"class_{i}" for i in range(1, n_classes + 1)],
    )
    return cube, label_map


def toy_model_config(patch_size: int = 3, dropout_p: float = 0.0) -> ModelConfig:
    """A two-layer stack small enough for exhaustive gradient checking.

    Works for 9-20 input bands split into two segments (layer depths 3 and 2
    fit even the 4-band half of a 9-band input). The second kernel spans
    2x2x2 so a single dead ReLU voxel cannot park a whole pre-activation
    exactly on the kink.
    """
    return ModelConfig(
        patch_size=patch_size,
        num_segments=2,
        conv_stack=((2, 2, 2, 3, 1, 0), (3, 2, 2, 2, 1, 0)),
        fc1_units=16,
        dropout_p=dropout_p,
    )
