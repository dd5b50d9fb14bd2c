from functools import lru_cache

import pytest

from quasidisc.mesh import SolverConfig, seed_mesh
from quasidisc.solver import minimize_area
from quasidisc.teichmuller import LaurentMap, sample_quasicircle


@lru_cache(maxsize=None)
def _solved(c1, n_vertices, epsilon):
    cfg = SolverConfig(n_vertices=n_vertices, epsilon=epsilon)
    gamma = sample_quasicircle(LaurentMap((c1,) if c1 else ()), 1024, with_norm=False)
    seed = seed_mesh(gamma, cfg)
    return gamma, seed, minimize_area(seed, cfg)


@pytest.fixture(scope="session")
def solved():
    """solved(c1, n_vertices=10000, epsilon=0.02) -> (quasicircle, seed mesh, minimised mesh), cached."""

    def get(c1, n_vertices=10000, epsilon=0.02):
        return _solved(float(c1), int(n_vertices), float(epsilon))

    return get


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
