import numpy as np
import pytest

from artifact import stokes_monodromy as sm

GL2_A0 = np.array([1.0, -1.0], dtype=complex)
GL3_A0 = np.array([0.0, 1.0, 1 + 1j])

# filled by the acceptance tests, printed after the run
CRITERIA = {}


def record_criterion(number, title, passed, detail=""):
    CRITERIA[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        title, ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def gl2_layout():
    return sm.sector_layout(GL2_A0, np.pi / 2)


@pytest.fixture(scope="session")
def gl3_layout():
    return sm.sector_layout(GL3_A0, 3 * np.pi / 4)


def random_x(rng, n, norm=0.5):
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return x * (norm / np.linalg.norm(x))


def random_group(rng, n, scale=0.3):
    return np.eye(n) + scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(n)
