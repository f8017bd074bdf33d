import numpy as np
import pytest

from vpmpcc.track import build_track, circle_centerline, generate_rvp, oval_centerline, sharp_corner_track

# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def sharp_track():
    tr = sharp_corner_track()
    return tr.with_rvp(generate_rvp(tr, 5.5, 4.0, 3.0, 3.0))


@pytest.fixture(scope="session")
def circle_track():
    return build_track(circle_centerline(10.0, n=64), 1.0, name="circle")


@pytest.fixture(scope="session")
def oval_track():
    tr = build_track(oval_centerline(straight=20.0, radius=5.0), 1.0, name="oval")
    return tr.with_rvp(generate_rvp(tr, 4.0, 4.0, 3.0, 3.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
