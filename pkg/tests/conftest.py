import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_image(data, colorspace="linear"):
    from aberrex.image import PlanarImage

    return PlanarImage(np.asarray(data, np.float32), colorspace)
