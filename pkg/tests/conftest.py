import numpy as np
import pytest

from rotquad import rotor2d as r2

# one representative magnetic-frame point (kx, ky, omega) per regime tag
REGIME_POINTS = {
    "A": (1.0, 2.0, 0.3),
    "B": (-1.0, -4.0, 2.0),
    "C": (-1.0, -4.0, 0.2),
    "D": (1.0, -1.0, 0.5),
    "E": (-1.0, -4.0, 1.0),
    "F": (0.0, 0.0, 0.5),
    "g": (1.0, 0.0, 0.5),
    "h": (-0.5, 0.0, 0.5),
    "i": (-2.0, 0.0, 0.5),
    "j": (-1.0, -4.0, 1.5),
    "k": (-1.0, -4.0, 0.5),
    "L": (-1.0, 0.0, 0.5),
}

# same regimes reached with swapped axes or negative omega
MIRROR_POINTS = {
    "g": (0.0, 1.0, 0.5),
    "h": (0.0, -0.5, -0.5),
    "i": (0.0, -2.0, 0.5),
    "j": (-4.0, -1.0, -1.5),
    "k": (-4.0, -1.0, 0.5),
    "L": (0.0, -1.0, 0.5),
    "B": (-1.0, -4.0, -2.0),
    "E": (-4.0, -1.0, 1.0),
}


def regime_params(tag):
    return r2.PotentialParams.magnetic(*REGIME_POINTS[tag])


@pytest.fixture(params=sorted(REGIME_POINTS))
def regime(request):
    return request.param, regime_params(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_RESULTS = []


@pytest.fixture
def record():
    """Log one PASS/FAIL line for an acceptance criterion."""

    def _record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_RESULTS.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
