import numpy as np
import pytest

from qsk_gcs.ansatz import GcsParams


def random_params(n, rng, scale=1.0, m_scale=1.0):
    m = np.triu(rng.normal(scale=m_scale, size=(n, n)), 1)
    return GcsParams(rng.normal(scale=scale, size=(n, 3)), rng.normal(scale=scale, size=(n, 3)), m + m.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
