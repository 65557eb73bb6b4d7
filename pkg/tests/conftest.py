import numpy as np
import pytest

from src.core.sparse_core import CsrMatrix
from tests.helpers import laplace_1d


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def lap1d_8() -> CsrMatrix:
    return laplace_1d(8)
