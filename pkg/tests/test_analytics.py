import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_bvp
from scipy.special import lambertw as sp_lambertw

from hybridcare import analytics as an
from hybridcare.analytics import PatientParams, Shape
from hybridcare.errors import DomainError, ValidationError

from conftest import TRAVEL_CASE, FAST_ONSITE, random_params


# ----------------------------------------------------------- oracles ----

def p_oracle(rho, x, a):
    """Gambler's-ruin probability in 50-digit arithmetic, textbook form."""
    with mpmath.workdps(50):
        rho, x, a = mpmath.mpf(rho), mpmath.mpf(x), mpmath.mpf(a)
        return float((1 - mpmath.exp(-rho * x)) / (mpmath.exp(rho * a) - mpmath.exp(-rho * x)))


def exit_bvp(theta, sigma, b, x):
    """Solve the backward equations for P(hit b first) and E[exit time]
    with a generic BVP solver and evaluate them at ``x``."""
    s = np.linspace(0.0, b, 400)
    D = 0.5 * sigma**2

    def f_prob(s, y):
        return np.vstack([y[1], theta * y[1] / D])

    def f_time(s, y):
        return np.vstack([y[1], (theta * y[1] - 1.0) / D])

    prob = solve_bvp(f_prob, lambda ya, yb: np.array([ya[0], yb[0] - 1.0]),
                     s, np.vstack([s / b, np.full_like(s, 1.0 / b)]), tol=1e-10, max_nodes=100000)
    time = solve_bvp(f_time, lambda ya, yb: np.array([ya[0], yb[0]]),
                     s, np.zeros((2, s.size)), tol=1e-10, max_nodes=100000)
    assert prob.success and time.success
    return float(prob.sol(x)[0]), float(time.sol(x)[0])


def fd(f, a, h=1e-6):
    return (f(a + h) - f(a - h)) / (2 * h)


# ------------------------------------------------------------- params ----

def test_params_validation():
    good = TRAVEL_CASE.to_dict()
    with pytest.raises(ValidationError):
        PatientParams.from_dict({**good, "extra": 1})
    bad = dict(good)
    del bad["x"]
    with pytest.raises(ValidationError):
        PatientParams.from_dict(bad)
    with pytest.raises(ValidationError):
        TRAVEL_CASE.replace(theta_R=0.0)
    with pytest.raises(ValidationError):
        TRAVEL_CASE.replace(T=-1.0)
    with pytest.raises(ValidationError):
        TRAVEL_CASE.replace(h_H=float("nan"))
    assert PatientParams.from_dict(good) == TRAVEL_CASE
    assert TRAVEL_CASE.replace(lam=0.0).lam == 0.0


def test_with_costs_shifts_both_rates():
    q = TRAVEL_CASE.with_costs(1.5)
    assert q.h_R == TRAVEL_CASE.h_R + 1.5 and q.h_H == TRAVEL_CASE.h_H + 1.5 and q.h_T == TRAVEL_CASE.h_T


def test_coefficients_fig4():
    c = an.derive_coeffs(TRAVEL_CASE)
    assert c.gamma == pytest.approx(-32.0, rel=1e-12)
    assert c.beta == pytest.approx(c.gamma * TRAVEL_CASE.x + c.eta * TRAVEL_CASE.T, rel=1e-12)
    assert c.eta == pytest.approx(2.0 + 2.65 * 0.1 / 0.05)
    assert c.A_bar == pytest.approx(13.0)


def test_delta_fig6():
    c = an.derive_coeffs(FAST_ONSITE)
    assert FAST_ONSITE.theta_H / FAST_ONSITE.theta_R == pytest.approx(2.5)
    assert c.Delta + 1 == pytest.approx(2.14, abs=0.01)


def test_a_bar_clamped():
    q = TRAVEL_CASE.replace(T=200.0)
    assert an.derive_coeffs(q).A_bar == 0.0


# ---------------------------------------------------------- call-in ----

@pytest.mark.parametrize("rho,x,a", [(0.01, 1.0, 2.0), (1.0, 1.0, 1.0), (40.0, 0.5, 3.0),
                                     (500.0, 2.0, 0.1), (1e-6, 3.0, 1.0), (2000.0, 10.0, 10.0)])
def test_call_in_prob_matches_high_precision(rho, x, a):
    assert an.call_in_prob(rho, x, a) == pytest.approx(p_oracle(rho, x, a), rel=1e-12, abs=1e-300)


def test_call_in_prob_limits():
    x, a = 1.3, 0.7
    assert an.call_in_prob(1e-9, x, a) == pytest.approx(x / (x + a), rel=1e-6)
    assert an.call_in_prob(1e4, x, a) < 1e-300
    assert an.call_in_prob(2.0, x, 0.0) == pytest.approx(1.0)
    rhos = np.geomspace(1e-4, 1e2, 300)
    ps = np.array([an.call_in_prob(r, x, a) for r in rhos])
    assert np.all(np.diff(ps) < 0)  # decreasing in rho


@pytest.mark.parametrize("theta,sigma,x,a", [(0.2, 1.0, 1.0, 2.0), (0.06, 0.8, 2.0, 4.0), (1.0, 1.5, 0.4, 0.3)])
def test_exit_formulas_against_bvp(theta, sigma, x, a):
    rho = 2 * theta / sigma**2
    p_ref, m_ref = exit_bvp(theta, sigma, x + a, x)
    assert an.call_in_prob(rho, x, a) == pytest.approx(p_ref, rel=1e-6)
    assert an.elos_remote(rho, theta, x, a) == pytest.approx(m_ref, rel=1e-6)


def test_vectorised_matches_scalar():
    grid = np.linspace(0, 10, 7)
    vec = an.call_in_prob(0.7, 1.2, grid)
    assert np.allclose(vec, [an.call_in_prob(0.7, 1.2, g) for g in grid], rtol=0, atol=0)
    w = an.workloads(TRAVEL_CASE, grid)
    assert all(np.allclose(w[i], [an.workloads(TRAVEL_CASE, g)[i] for g in grid]) for i in range(3))


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 50), st.floats(1e-2, 10), st.floats(0, 20))
def test_call_in_prob_bounds(rho, x, a):
    p = an.call_in_prob(rho, x, a)
    assert 0.0 <= p <= x / (x + a) + 1e-12
    assert an.call_in_prob_deriv(rho, x, a) <= 0.0


# ------------------------------------------------------- derivatives ----

@pytest.mark.parametrize("seed", range(8))
def test_derivatives_match_finite_differences(seed):
    p = random_params(np.random.default_rng(seed))
    c = an.derive_coeffs(p)
    for a in (0.1, 1.0, 3.0):
        assert an.call_in_prob_deriv(c, p.x, a) == pytest.approx(
            fd(lambda t: an.call_in_prob(c, p.x, t), a), rel=1e-6, abs=1e-10)
        for i in range(3):
            assert an.workload_derivs(p, a)[i] == pytest.approx(
                fd(lambda t: an.workloads(p, t)[i], a), rel=1e-6, abs=1e-9)
        assert an.cost_rate_deriv(p, a) == pytest.approx(fd(lambda t: an.cost_rate(p, t), a),
                                                         rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_shape_sign_agrees_with_derivative(seed):
    p = random_params(np.random.default_rng(100 + seed))
    for a in np.linspace(0.0, 8.0, 33):
        d = an.workload_total_deriv(p, a)
        s = an.workload_shape_sign(p, a)
        if abs(d) > 1e-9:
            assert np.sign(d) == np.sign(s)


# -------------------------------------------------------------- cost ----

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 10))
def test_cost_forms_agree(seed, a):
    p = random_params(np.random.default_rng(seed))
    assert an.cost_rate(p, a) == pytest.approx(an.cost_rate_direct(p, a), rel=1e-10, abs=1e-10)
    wh, wr, wt = an.workloads(p, a)
    assert wt == pytest.approx(wh + wr)
    assert wh >= 0 and wr >= -1e-12


def test_zero_arrivals_zero_cost():
    q = TRAVEL_CASE.replace(lam=0.0)
    assert an.cost_rate(q, 3.0) == 0.0
    assert an.workloads(q, 3.0) == (0.0, 0.0, 0.0)


def test_onsite_stay():
    assert an.elos_onsite(FAST_ONSITE, 2.0) == pytest.approx((1 + 2 + 0.2) / 0.5)


# --------------------------------------------------------- quadratic ----

@pytest.mark.parametrize("seed", range(6))
def test_quadratic_forms_agree(seed):
    p = random_params(np.random.default_rng(200 + seed))
    a = np.linspace(0, 6, 25)
    d = an.cost_rate_quadratic(p, a, form="direct")
    c = an.cost_rate_quadratic(p, a, form="coefficients")
    assert np.allclose(d, c, rtol=1e-12, atol=1e-12 * np.max(np.abs(d)))


def test_quadratic_unknown_form():
    with pytest.raises(ValueError):
        an.cost_rate_quadratic(TRAVEL_CASE, 1.0, form="other")


def test_second_moment_negativity_is_flagged():
    # tiny call-in probability and a large x make the printed remote moment negative
    q = TRAVEL_CASE.replace(sigma_R=0.5, x=3.0)
    m = an.second_moments(q, 5.0)
    assert m.m2_R < 0 and m.m2_R_negative
    m_ok = an.second_moments(FAST_ONSITE, 1.0)
    assert m_ok.m2_H > 0


# ---------------------------------------------------------- Lambert W ----

@pytest.mark.parametrize("z", [-1 / math.e + 1e-14, -0.367, -0.3, -0.1, -1e-8, 0.0, 1e-10, 0.5, 1.0, 2.9,
                               3.1, 10.0, 1e3, 1e10, 1e100, 1e300])
def test_lambert_w_against_scipy(z):
    w = an.lambert_w(z)
    ref = sp_lambertw(z).real
    assert w == pytest.approx(ref, rel=1e-13, abs=1e-7 if z < -0.3678 else 1e-15)
    if z > -0.36:
        assert w * math.exp(w) == pytest.approx(z, rel=1e-13, abs=1e-300)


def test_lambert_w_domain():
    assert an.lambert_w(-1 / math.e) == -1.0
    with pytest.raises(DomainError):
        an.lambert_w(-0.4)
    assert math.isnan(an.lambert_w(float("nan")))
    arr = an.lambert_w(np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert arr.shape == (2, 2) and arr[0, 0] == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.3678794411714423, 1e6))
def test_lambert_w_inverse_property(z):
    w = an.lambert_w(z)
    assert w >= -1.0
    assert w * math.exp(w) == pytest.approx(z, rel=1e-10, abs=1e-10)


def test_workload_case_invariants():
    with pytest.raises(ValidationError):
        an.WorkloadCase(Shape.UNIMODAL)
    with pytest.raises(ValidationError):
        an.WorkloadCase(Shape.DECREASING, 1.0)
    assert an.WorkloadCase(Shape.UNIMODAL, 0.5).number == 2
