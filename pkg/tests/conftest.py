import numpy as np
import pytest

from tiltdid import PanelDataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_dataset(n=200, p=2, seed=0, noise=1.0, treated_frac=0.6):
    """Small generic panel with linear outcome structure for unit tests."""
    rng = np.random.default_rng(seed)
    x = rng.random((n, p))
    treated = rng.random(n) < treated_frac
    # guarantee both strata
    treated[0] = True
    treated[1] = False
    d = rng.beta(2.0, 2.0, size=n)
    a = np.where(treated, d, 0.0)
    dy = np.where(treated, 0.5 * d + x.sum(axis=1), x.sum(axis=1))
    dy = dy + noise * rng.standard_normal(n)
    return PanelDataset(y0=np.zeros(n), y1=dy, a=a, x=x)


@pytest.fixture
def small_data():
    return make_dataset()
