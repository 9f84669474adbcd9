import numpy as np
import pytest

from domainrag_sidecar.config import SidecarConfig


@pytest.fixture
def rng():
    return np.random.default_rng(77)


@pytest.fixture(scope="session")
def fallback_config():
    return SidecarConfig.with_fallback_models(seed=5)


def random_image(rng, h, w):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
