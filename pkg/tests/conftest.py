import pytest

from sonicpatch import pipeline as pl
from sonicpatch import solver as sol


@pytest.fixture(scope="session")
def ref_cfg():
    return pl.parse_config(pl.REFERENCE_CONFIG)


@pytest.fixture(scope="session")
def ref(ref_cfg):
    return pl.setup(ref_cfg)


@pytest.fixture(scope="session")
def march_cache(ref):
    cache = {}

    def get(n_levels, form="primal"):
        key = (n_levels, form)
        if key not in cache:
            cache[key] = sol.march(ref.region, sol.SolverConfig(n_levels=n_levels, form=form))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def coarse(march_cache):
    return march_cache(60)


# one line per acceptance criterion in the terminal summary
_CRITERIA = {}
N_CRITERIA = 10


@pytest.fixture
def criterion():
    def record(n, ok, detail):
        _CRITERIA[n] = (bool(ok), detail)
        assert ok, f"criterion {n}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in _CRITERIA:
            ok, detail = _CRITERIA[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
