import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gmfg.graphon import SBM_BLOCK_MATRIX, StepGraphon, sample_simple_graph
from gmfg.solver import experiment_parameters

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return experiment_parameters()


@pytest.fixture(scope="session")
def sbm30():
    """30-node graph sampled from the SBM limit, with initial means."""
    graph = sample_simple_graph(StepGraphon(SBM_BLOCK_MATRIX), 30, 11)
    means = np.random.default_rng(5).uniform(-3, 3, (30, 2))
    return graph.adjacency, means


def random_symmetric(rng, n, low=0.0, high=1.0):
    w = rng.uniform(low, high, (n, n))
    return 0.5 * (w + w.T)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda r: int(r.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
