import numpy as np
import pytest

from nodalab.geometry import PolygonDomain

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record():
    """Store one pass/fail line for an acceptance criterion and echo it."""

    def _record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])


@pytest.fixture(scope="session")
def square():
    return PolygonDomain.rectangle()


@pytest.fixture(scope="session")
def lshape():
    return PolygonDomain.l_shape()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
