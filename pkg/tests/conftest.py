import numpy as np
import pytest

from artifact.haar import RngStream

ACCEPTANCE_LINES: list = []


@pytest.fixture
def rng(request):
    """Stream keyed by the test name, so tests do not share random draws."""
    return RngStream.for_trial(20240601, "tests", request.node.nodeid)


@pytest.fixture
def gen(rng):
    return rng.generator


def random_hermitian(g: np.random.Generator, d: int) -> np.ndarray:
    a = g.normal(size=(d, d)) + 1j * g.normal(size=(d, d))
    return (a + a.conj().T) / 2


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
