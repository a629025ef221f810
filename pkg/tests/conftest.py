import math

import mpmath
import pytest

from repoconvexity.convexity import ModelParams, RepoSchedule
from repoconvexity.curves import build_curve

ACCEPTANCE_LINES: list[str] = []


def flat_curve(rate, horizon=30.0, step=0.25, valuation_time=0.0):
    n = round(horizon / step)
    times = [valuation_time + step * i for i in range(1, n + 1)]
    return build_curve(valuation_time, [(x, math.exp(-rate * (x - valuation_time))) for x in times])


def literal_b(tau, delta, mu, theta, kappa, dps=60):
    """B evaluated term by term from its unsimplified two-line form in high precision."""
    with mpmath.workdps(dps):
        th, ka = mpmath.mpf(theta), mpmath.mpf(kappa)
        tau, delta, mu = mpmath.mpf(tau), mpmath.mpf(delta), mpmath.mpf(mu)
        e = mpmath.exp
        first = (1 / (th * ka)) * (1 - e(-th * mu)) * (
            (1 - e(-th * (tau + delta))) / th - (1 - e(-(th + ka) * (tau + delta))) / (th + ka)
        )
        second = (1 / (th * ka)) * (1 - e(-th * (delta + mu))) * (
            (1 - e(-th * tau)) / th - e(-ka * delta) * (1 - e(-(th + ka) * tau)) / (th + ka)
        )
        return float(first - second)


@pytest.fixture
def reference_params():
    return ModelParams(sigma=0.01, epsilon=0.005, theta=0.03, kappa=0.10, rho=-0.5)


@pytest.fixture
def reference_schedule():
    return RepoSchedule(0.0, 1.0, 1.25, 10.0, 0.25)


@pytest.fixture
def bond_curve():
    return flat_curve(0.02)


@pytest.fixture
def derivative_curve():
    return flat_curve(0.022)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
