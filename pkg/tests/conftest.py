"""Shared fixtures: named parameter sets and random draws."""
import numpy as np
import pytest

ACCEPTANCE_LINES = []  # filled by test_acceptance.report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

from hybridcare.analytics import PatientParams


def make(theta_H, theta_R, theta_T, h_H, h_R, h_T, x, S_bar, lam=1.0, sigma_R=1.0, T=0.0, sigma_H=1.0):
    return PatientParams(lam=lam, x=x, T=T, theta_R=theta_R, theta_H=theta_H, theta_T=theta_T,
                         sigma_R=sigma_R, h_R=h_R, h_H=h_H, h_T=h_T, S_bar=S_bar, sigma_H=sigma_H)


# remote care viable only for a window of travel times
TRAVEL_CASE = make(0.05, 0.06, 0.1, 2.65, 5.1, 2.0, 2.0, 15.0)
# decreasing-then-increasing workload, threshold falls as capacity tightens
FAST_ONSITE = make(0.5, 0.2, 0.1, 2.65, 1.4, 2.0, 1.0, 15.0, T=2.0)
# threshold rises as capacity tightens
SLOW_ONSITE = make(0.05, 0.06, 0.1, 2.65, 5.1, 2.0, 1.0, 10.0, T=2.0)
# two types whose optimal thresholds cross as capacity tightens
PAIR_CROSSING = (make(0.35, 0.25, 0.1, 2.65, 1.4, 2.0, 1.0, 12.0, T=8.0),
                 make(0.5, 0.2, 0.1, 3.0, 1.4, 2.0, 1.0, 15.0, T=5.0))
# two types whose thresholds move in opposite directions
PAIR_OPPOSITE = (make(0.5, 0.2, 0.1, 2.65, 1.4, 2.0, 1.0, 15.0, T=2.0),
                 make(0.05, 0.06, 0.1, 2.65, 5.1, 2.0, 1.0, 15.0, T=2.0))


def random_params(rng, **fixed):
    """A random but well-conditioned parameter set."""
    d = dict(
        lam=rng.uniform(0.5, 3.0),
        x=rng.uniform(0.5, 3.0),
        T=rng.uniform(0.0, 5.0),
        theta_R=rng.uniform(0.05, 0.6),
        theta_H=rng.uniform(0.05, 0.6),
        theta_T=rng.uniform(0.02, 0.3),
        sigma_R=rng.uniform(0.5, 2.0),
        h_R=rng.uniform(0.5, 6.0),
        h_H=rng.uniform(0.5, 6.0),
        h_T=rng.uniform(0.1, 3.0),
        S_bar=rng.uniform(8.0, 20.0),
        sigma_H=rng.uniform(0.5, 2.0),
    )
    d.update(fixed)
    return PatientParams(**d)


@pytest.fixture
def travel_case():
    return TRAVEL_CASE


@pytest.fixture
def fast_onsite():
    return FAST_ONSITE


@pytest.fixture
def slow_onsite():
    return SLOW_ONSITE


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
