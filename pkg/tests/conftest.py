import numpy as np
import pytest

from cavprobe import preset


@pytest.fixture
def reichel():
    return preset("reichel")


@pytest.fixture
def squeezed():
    return preset("reichel-squeezed")


def random_density(dim, rng, rank=None):
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)
