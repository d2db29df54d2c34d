import numpy as np
import pytest

from diffrestore.targets import UniformTarget, WrappedGaussianMixture

MIXTURE_WEIGHTS = [0.5, 0.3, 0.2]
MIXTURE_MEANS = [[0.3, 0.3], [0.7, 0.6], [0.4, 0.8]]
MIXTURE_STDDEVS = [0.1, 0.07, 0.12]


def make_mixture(width=32, height=32):
    """The three-mode mixture shared by the bundled configs and the acceptance tests."""
    return WrappedGaussianMixture(MIXTURE_WEIGHTS, MIXTURE_MEANS, MIXTURE_STDDEVS, width=width, height=height)


@pytest.fixture
def mixture():
    return make_mixture()


@pytest.fixture
def small_mixture():
    return make_mixture(8, 8)


@pytest.fixture
def uniform():
    return UniformTarget()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request, capsys):
    """``report(n, title, ok, detail)``: print one PASS/FAIL line and fail the test if not ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(n, title, ok, detail):
        line = f"CRITERION {n} {'PASS' if ok else 'FAIL'} - {title}: {detail}"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
