import numpy as np
import pytest

from phasecoop.channel import cn


def rand_channels(rng, m, k, scale=1.0):
    """(M, K) i.i.d. complex Gaussian channel columns."""
    return scale * cn(rng, (m, k))


def unit_modulus(rng, n, d=None):
    shape = (n,) if d is None else (n, d)
    return np.exp(2j * np.pi * rng.random(shape))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
