import numpy as np
import pytest

from ipgmm.dataio import load_dataset


def random_spd(rng, d, spread=10.0):
    """Random SPD matrix with eigenvalues in [1, spread]."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    ev = np.exp(rng.uniform(0.0, np.log(spread), size=d))
    return (q * ev) @ q.T


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@pytest.fixture(scope="session")
def iris():
    return load_dataset("iris")


@pytest.fixture(scope="session")
def crabs():
    return load_dataset("crabs")


# one line per acceptance criterion, shown at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
