import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_hermitian(rng, n, spread=1.0):
    """Random hermitian matrix rescaled so its spectral radius equals ``spread``."""
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = (X + X.conj().T) / 2
    w, U = np.linalg.eigh(H)
    w = spread * w / np.max(np.abs(w))
    return (U * w) @ U.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
