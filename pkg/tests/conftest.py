"""Shared test helpers: cached random weight stores and the synthetic
correlated stereo-pair generator used by end-to-end and acceptance tests.
"""

import numpy as np
import pytest

from camsic.config import DESK_CONFIG
from camsic.weights_io import random_store


@pytest.fixture(scope="session")
def desk_store():
    return random_store(DESK_CONFIG, seed=1)


def synthetic_pair(rng, height=48, width=64, shift=4, noise=0.02):
    """Correlated stereo pair: a smooth random field plus a horizontal
    shift of the second view and independent sensor noise.

    The smooth base comes from upsampling a coarse random grid, so the
    pair carries real cross-view structure for the disparity prior.
    """
    coarse = rng.random((3, height // 8 + 2, width // 8 + 2))
    up = np.kron(coarse, np.ones((8, 8)))[:, :height, :width + 8]
    left = up[:, :, :width]
    right = np.roll(up, -shift, axis=2)[:, :, :width]
    left = left + rng.normal(0.0, noise, left.shape)
    right = right + rng.normal(0.0, noise, right.shape)
    return (np.clip(left, 0, 1).astype(np.float32),
            np.clip(right, 0, 1).astype(np.float32))
