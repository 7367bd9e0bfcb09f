import numpy as np
import pytest

from etesc import ControllerGain, DitherSpec, QuadraticMap, SimConfig, TriggerConfig

H7 = np.array([[100.0, 30.0], [30.0, 20.0]])
THETA7 = np.array([2.0, 4.0])
Q7 = 100.0
K7 = np.diag([-0.06, -0.20])
BETA7, MU7, GAMMA7 = 3.1521, 0.4320, 0.0542


@pytest.fixture
def qmap7():
    return QuadraticMap(H7, THETA7, Q7)


@pytest.fixture
def gain7():
    return ControllerGain(K7)


def trigger7(kind="static", sigma=0.5, upsilon0=0.0, h=0.0):
    return TriggerConfig(kind, sigma, 1.0, BETA7, MU7, GAMMA7, upsilon0, h)


def dither7(base=300.0):
    return DitherSpec([0.1, 0.1], [1, 7], base)


def sim7(kind="static", duration=2.0, mode="full", base=300.0, sigma=0.5, theta0=(2.5, 6.0),
         washout=0.1, dt=None, decimation=1, h=0.0, upsilon0=0.0, **kw):
    d = dither7(base)
    if dt is None:
        dt = 2 * np.pi / float(np.max(d.omegas)) / 50
    return SimConfig(QuadraticMap(H7, THETA7, Q7), d, ControllerGain(K7),
                     trigger7(kind, sigma, upsilon0, h), np.asarray(theta0, dtype=float), duration,
                     dt=dt, mode=mode, washout_ratio=washout, decimation=decimation, **kw)


ACCEPTANCE_LINES = []


def report(number, ok, detail):
    """Record one acceptance line; printed again in the terminal summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append((number, line))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
