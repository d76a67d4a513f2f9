import numpy as np
import pytest

from robustmimo.config import desk_scenario, preset
from robustmimo.experiments import cycle_settings
from robustmimo.optimizer import multi_start


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    f = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return f @ f.conj().T


def random_hermitian(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk():
    return desk_scenario()


@pytest.fixture(scope="session")
def desk_settings():
    return cycle_settings(preset("desk"))


@pytest.fixture(scope="session")
def desk_multistart(desk, desk_settings):
    """Three starts on the desk scene, shared by the optimizer and synthesis tests."""
    return multi_start(desk, 3, 0, desk_settings)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
