import numpy as np
import pytest

from wowflow.data_io import make_gaussian_blobs
from wowflow.oracles import jitter


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(C, n, d, seed, spread=0.3, center_scale=0.5):
    """Small jittered mixture away from projection ties."""
    return jitter(make_gaussian_blobs(C, n, d, spread=spread, seed=seed, center_scale=center_scale), seed=seed + 100)
