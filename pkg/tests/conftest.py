import numpy as np
import pytest
from hypothesis import settings

from bregat.nn import NetworkSpec, init_params

settings.register_profile("repo", max_examples=50, deadline=None)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_net():
    spec = NetworkSpec(3, (5, 4), 3, activation="tanh")
    return spec, init_params(spec, seed=7)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """record(n, passed, detail) stores one line for the end-of-run acceptance table."""
    table = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(n, passed, detail):
        table[n] = (bool(passed), detail)
        print(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_ACCEPTANCE, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(table):
        passed, detail = table[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
