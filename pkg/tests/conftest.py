import numpy as np
import pytest

from qdcascade.states import DensityMatrix, TwoPhotonKet


def random_density_matrix(rng, rank=4):
    """Random physical state from a Ginibre draw of the given rank."""
    g = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_pure_ket(rng):
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return TwoPhotonKet(v / np.linalg.norm(v))


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
