import pytest

from beamnf.dispersion import DispersionContext
from beamnf.lattice import analyze_set

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    def _record(n: int, ok: bool, detail: str = "") -> None:
        _CRITERIA[n] = (bool(ok), detail)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def ex2d():
    return analyze_set([(0, 1), (1, -1)])


@pytest.fixture(scope="session")
def ex3d():
    return analyze_set([(0, 1, 0), (1, -1, 0)])


@pytest.fixture(scope="session")
def ex1d():
    return analyze_set([1, 2])


@pytest.fixture
def ctx2():
    return DispersionContext(2, 1.0)
