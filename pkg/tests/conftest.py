import numpy as np
import pytest

from expham.polynomial import PolynomialPotential
from expham.system import SemilinearSystem


def random_skew(dim, rng, scale=1.0):
    R = rng.normal(size=(dim, dim))
    return scale * 0.5 * (R - R.T)


def random_symmetric(dim, rng, scale=1.0):
    R = rng.normal(size=(dim, dim))
    return scale * 0.5 * (R + R.T)


def random_cubic_potential(dim, rng, scale=0.3, homogeneous=True):
    """A cubic potential with a handful of random monomials."""
    terms = []
    for _ in range(2 * dim):
        e = [0] * dim
        for _ in range(3):
            e[rng.integers(dim)] += 1
        terms.append((scale * rng.normal(), e))
    if not homogeneous:
        for _ in range(dim):
            e = [0] * dim
            for _ in range(2):
                e[rng.integers(dim)] += 1
            terms.append((scale * rng.normal(), e))
    return PolynomialPotential(dim, terms)


def random_conservative_cubic_system(dim, rng, scale=0.3, homogeneous=True):
    Q = random_skew(dim, rng, scale=0.8)
    M = random_symmetric(dim, rng, scale=0.8)
    U = random_cubic_potential(dim, rng, scale=scale, homogeneous=homogeneous)
    return SemilinearSystem(Q, M, U)


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


def available_backends():
    from expham.integrators import have_compiled_backend

    backends = ["python"]
    if have_compiled_backend():
        backends.append("compiled")
    return backends


def pytest_generate_tests(metafunc):
    if "backend" in metafunc.fixturenames:
        metafunc.parametrize("backend", available_backends())
