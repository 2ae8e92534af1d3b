import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shmvoi.fe import build_model
from shmvoi.surrogate import cached_grid

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# coarse corrosion grid for unit tests; the full 61 x 61 grid is used by the acceptance suite
COARSE_CORROSION_AXES = (np.linspace(0.0, 12.0, 13), np.linspace(0.0, 12.0, 13))


@pytest.fixture(scope="session")
def grid_cache(pytestconfig):
    return pytestconfig.cache.mkdir("shmvoi-grids")


@pytest.fixture(scope="session")
def model():
    return build_model()


@pytest.fixture(scope="session")
def scour_table(grid_cache):
    return cached_grid("scour", grid_cache)[0]


@pytest.fixture(scope="session")
def corrosion_coarse(grid_cache):
    return cached_grid("corrosion", grid_cache, axes=COARSE_CORROSION_AXES)[0]


@pytest.fixture(scope="session")
def corrosion_table(grid_cache):
    return cached_grid("corrosion", grid_cache)[0]


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    """Criterion number -> (PASS/FAIL, detail); echoed in the terminal summary."""
    return pytestconfig.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
