import numpy as np
import pytest

from qcreg.mesh import build_grid_mesh

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def mesh_cache():
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = build_grid_mesh(n)
        return cache[n]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
