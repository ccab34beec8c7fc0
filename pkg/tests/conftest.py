import numpy as np
import pytest

from stefan_pinn.physics import StefanConfig


@pytest.fixture(scope="session")
def cfg():
    """Baseline melting configuration used throughout the suite."""
    return StefanConfig()


@pytest.fixture(scope="session")
def cfg_hard():
    """Low Stefan number variant where naive training is known to struggle."""
    return StefanConfig(ste=0.005)


@pytest.fixture(autouse=True)
def _seeded_numpy():
    # Belt and braces: nothing should rely on global state, but keep runs stable.
    np.random.seed(0)
    yield
