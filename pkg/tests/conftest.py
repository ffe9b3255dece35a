import numpy as np
import pytest

from panelift.dgp import DgpSpec
from panelift.links import LinkFunctions


@pytest.fixture
def constant_spec():
    """Tiny noiseless spec factory for controlled structural tests."""

    def make(theta=2.0, mu=1.0, beta=3.0, psi=0.0, gamma=0.0, **kw):
        links = LinkFunctions.constant(theta=theta, mu=mu, beta=beta, psi=psi, gamma=gamma)
        defaults = dict(
            n_units=4, links=links, t_periods=5, var_eps=0.0, var_eta=0.0, var_u=0.0, seed=1
        )
        defaults.update(kw)
        return DgpSpec(**defaults)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full acceptance criteria (slow)")
