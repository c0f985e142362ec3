import numpy as np
import pytest

from kleinbox.core import paper_params
from kleinbox.dirac import find_levels
from kleinbox.lattice import build_hamiltonian, chain_from_params, eigensolve, site_map


@pytest.fixture(scope="session")
def e1():
    return paper_params((15, 15))


@pytest.fixture(scope="session")
def e4():
    return paper_params((15, 9))


@pytest.fixture(scope="session")
def e1_levels(e1):
    return find_levels(e1)


@pytest.fixture(scope="session")
def e1_chain(e1):
    spec = chain_from_params((15, 15), e1)
    return spec, eigensolve(build_hamiltonian(spec)), site_map(spec, e1.lattice_const)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
