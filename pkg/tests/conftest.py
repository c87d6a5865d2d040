import math

import numpy as np
import pytest

from linecombo.geometry import Frame, Line, intersects_frame


@pytest.fixture
def square():
    return Frame(100, 100)


@pytest.fixture
def frame480():
    return Frame(480, 480)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_crossing_lines(rng, frame, n, rho_frac=0.95):
    """Random lines that cross the frame interior."""
    out = []
    while len(out) < n:
        theta = rng.uniform(0.0, math.pi)
        reach = (frame.width * abs(math.cos(theta)) + frame.height * abs(math.sin(theta))) / 2.0
        line = Line.make(rng.uniform(-rho_frac, rho_frac) * reach, theta)
        if intersects_frame(line, frame):
            out.append(line)
    return out


# (criterion number, description, passed) collected by tests/test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, desc, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {desc}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
