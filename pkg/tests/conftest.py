import numpy as np
import pytest

from morphtag.tagset import TagScheme


@pytest.fixture(scope="session")
def scheme():
    return TagScheme.default()


@pytest.fixture()
def nprng():
    return np.random.Generator(np.random.PCG64(12345))
