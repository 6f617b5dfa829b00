import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

from specpart.model import build_model
from specpart.synth import toy_model_config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_model():
    """10-band, 3-class model with the exhaustively checkable toy stack."""
    return build_model(toy_model_config(patch_size=3), n_bands=10, n_classes=3, seed=2)


@pytest.fixture
def toy_patch(rng):
    return rng.random((3, 3, 10))
