import numpy as np
import pytest

from tgreedy.moments import DomainCollection, DomainMoments

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def collection_from_covs(covs, second=None):
    """Identity-Gram domains whose cross-covariances are the rows of ``covs``."""
    covs = np.atleast_2d(np.asarray(covs, dtype=float))
    p = covs.shape[1]
    second = np.ones(p) if second is None else np.asarray(second, dtype=float)
    G = np.diag(second)
    domains = [DomainMoments(f"d{k}", c, G, 1.0, 100) for k, c in enumerate(covs)]
    return DomainCollection.from_domains(domains)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
