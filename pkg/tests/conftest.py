import numpy as np
import pytest

from binwave.wavelets import build_basis


@pytest.fixture(scope="session")
def haar1():
    return build_basis("haar", d=1)


@pytest.fixture(scope="session")
def haar2():
    return build_basis("haar", d=2)


@pytest.fixture(scope="session")
def db2():
    return build_basis("daubechies-2", d=1)


@pytest.fixture(scope="session")
def db4():
    return build_basis("daubechies-4", d=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
