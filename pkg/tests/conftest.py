import numpy as np
import pytest

from qtherm.linalg import PAULI

SX, SY, SZ, I2 = PAULI["X"], PAULI["Y"], PAULI["Z"], PAULI["I"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def close(a, b, tol):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) <= tol
