import numpy as np
import pytest

from switchsde import Segment, SwitchingDelayOU, validate_generator


@pytest.fixture(scope="session")
def q_t2_gamma2():
    """Two-regime chain with rates (1, gamma=2)."""
    return validate_generator([[-1.0, 1.0], [2.0, -2.0]])


@pytest.fixture(scope="session")
def q_symmetric():
    return validate_generator([[-1.0, 1.0], [1.0, -1.0]])


@pytest.fixture(scope="session")
def example1_params():
    # certified parameter set of the two-regime delay-OU model
    return dict(a1=0.1, b1=0.1, a2=-1.0, b2=0.1, gamma=1.0)


@pytest.fixture(scope="session")
def example1_model():
    ou = SwitchingDelayOU(a=[0.1, -1.0], b_delay=[0.1, 0.1], sigma=[0.2, 0.3], lag=1.0)
    return ou.model()


@pytest.fixture()
def constant_segment():
    def make(value, tau=1.0, m_steps=10, dim=1):
        return Segment.constant(value, tau, m_steps, dim)

    return make


def random_irreducible_generator(rng, n):
    """Dense positive off-diagonal rates: strongly connected by construction."""
    raw = rng.uniform(0.2, 2.0, size=(n, n))
    np.fill_diagonal(raw, 0.0)
    raw[np.diag_indices(n)] = -raw.sum(axis=1)
    return validate_generator(raw)
