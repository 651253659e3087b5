"""Single-type threshold optimisation.

Covers the workload-shape classification, the feasible capacity region, the
closed-form uncapacitated optimum, its dependence on travel time, the
capacity-constrained optimum with its shadow price, and a numeric optimum for
quadratic holding costs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import analytics as an
from .analytics import PatientParams, Shape, WorkloadCase
from .errors import InfeasibleError
from .roots import bisect, golden_min

_BRANCH = -0.36787944117144233
ROOT_TOL = 1e-10
MAX_ITER = 200


class Regime(str, enum.Enum):
    MAX_ALLOWABLE = "MaxAllowable"
    INTERIOR = "Interior"
    IMMEDIATE_ONSITE = "ImmediateOnsite"
    CAPACITY_BINDING = "CapacityBinding"


@dataclass(frozen=True)
class FeasibilitySummary:
    case: WorkloadCase
    a_min: float
    w_min: float
    A_bar: float

    def feasible_for(self, capacity: float) -> bool:
        return self.w_min <= capacity


@dataclass
class ThresholdSolution:
    a_star: float
    regime: Regime
    gamma_shadow: float
    cost: float
    workloads: tuple
    call_in_prob: float
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        w_h, w_r, w_t = self.workloads
        return {
            "a_star": self.a_star,
            "regime": self.regime.value,
            "Gamma": self.gamma_shadow,
            "cost": self.cost,
            "W_H": w_h,
            "W_R": w_r,
            "W_T": w_t,
            "p_call_in": self.call_in_prob,
            "flags": list(self.flags),
        }


@dataclass
class TravelProfile:
    T_UB: float
    T_LB: float | None = None
    T_hat: float | None = None
    samples: list = field(default_factory=list)  # (T, a_star, da_star/dT)

    @property
    def viable(self) -> bool:
        """Whether some travel time admits a positive threshold."""
        if self.T_LB is None:
            return self.T_UB > 0
        return self.T_LB < self.T_UB


@dataclass
class GammaEquivalence:
    a_capacitated: float
    Gamma: float
    a_modified: float
    gamma: float
    gamma_Gamma: float

    @property
    def difference(self) -> float:
        return abs(self.a_modified - self.a_capacitated)

    def ok(self, tol: float = 1e-8) -> bool:
        return self.difference <= tol


# ------------------------------------------------------------ workload ----

def classify_workload(p: PatientParams) -> WorkloadCase:
    """Shape of ``W_T`` in the threshold: decreasing, unimodal or increasing."""
    c = an.derive_coeffs(p)
    r = p.theta_H / p.theta_R
    if r <= 1.0:
        return WorkloadCase(Shape.DECREASING)
    if r >= 1.0 + c.Delta:
        return WorkloadCase(Shape.INCREASING)
    hi = 1.0
    while an.workload_shape_sign(p, hi) <= 0.0:
        hi *= 2.0
    a0 = bisect(lambda a: an.workload_shape_sign(p, a), 0.0, hi, xtol=ROOT_TOL, max_iter=MAX_ITER)
    return WorkloadCase(Shape.UNIMODAL, a0)


def feasibility(p: PatientParams) -> FeasibilitySummary:
    """Workload-minimising threshold on ``[0, A_bar]`` and the minimal load."""
    case = classify_workload(p)
    a_bar = an.derive_coeffs(p).A_bar
    if case.shape is Shape.DECREASING:
        a_min = a_bar
    elif case.shape is Shape.INCREASING:
        a_min = 0.0
    else:
        a_min = min(case.a0, a_bar)
    return FeasibilitySummary(case=case, a_min=a_min, w_min=an.workload_total(p, a_min), A_bar=a_bar)


# -------------------------------------------------------- uncapacitated ----

def lambert_argument(c: an.DerivedCoeffs, x: float) -> float:
    z = -math.exp(-c.rho * x + c.beta * c.rho / c.gamma - 1.0)
    if z < _BRANCH + 1e-15 and z > _BRANCH - 1e-12:
        z = _BRANCH + 1e-15
    return z


def a_tilde(p: PatientParams, coeffs: an.DerivedCoeffs | None = None) -> float:
    """Stationary point of the cost when ``gamma < 0`` (may exceed ``A_bar``)."""
    c = coeffs or an.derive_coeffs(p)
    w = an.lambert_w(lambert_argument(c, p.x))
    return (1.0 + w) / c.rho - c.beta / c.gamma


def foc_residual(p: PatientParams, a: float, coeffs: an.DerivedCoeffs | None = None) -> float:
    """``exp(-rho a) - (1 - beta rho / gamma - rho a) exp(rho x)``."""
    c = coeffs or an.derive_coeffs(p)
    return math.exp(-c.rho * a) - (1.0 - c.beta * c.rho / c.gamma - c.rho * a) * math.exp(c.rho * p.x)


def _solution(p, a, regime, gamma_shadow=0.0, flags=None, cost=None):
    c = an.derive_coeffs(p)
    return ThresholdSolution(
        a_star=float(a),
        regime=regime,
        gamma_shadow=float(gamma_shadow),
        cost=float(an.cost_rate(p, a, c) if cost is None else cost),
        workloads=an.workloads(p, a),
        call_in_prob=an.call_in_prob(c.rho, p.x, a),
        flags=list(flags or []),
    )


def unconstrained_threshold(p: PatientParams) -> tuple[float, Regime]:
    """Cost-minimising threshold over ``[0, A_bar]`` and its regime."""
    c = an.derive_coeffs(p)
    if c.A_bar == 0.0:
        return 0.0, Regime.IMMEDIATE_ONSITE
    if c.gamma >= 0.0:
        return c.A_bar, Regime.MAX_ALLOWABLE
    dominance = -c.gamma * math.expm1(-c.rho * p.x) / c.rho
    if c.beta <= dominance:
        return 0.0, Regime.IMMEDIATE_ONSITE
    at = a_tilde(p, c)
    if at >= c.A_bar - ROOT_TOL * max(1.0, c.A_bar):
        return c.A_bar, Regime.MAX_ALLOWABLE
    return at, Regime.INTERIOR


def solve_uncapacitated(p: PatientParams) -> ThresholdSolution:
    a, regime = unconstrained_threshold(p)
    return _solution(p, a, regime)


# ---------------------------------------------------------- travel time ----

def _w_of_T(c: an.DerivedCoeffs, T: float) -> float:
    z = -math.exp(c.eta * c.rho * T / c.gamma - 1.0)
    return an.lambert_w(max(z, _BRANCH + 1e-15) if z < _BRANCH + 1e-15 else z)


def threshold_slope(p: PatientParams, T: float, bounds: tuple | None = None) -> float:
    """Closed-form derivative of the uncapacitated threshold in travel time.

    ``-(eta/gamma) / (1 + W(-exp(rho eta T / gamma - 1)))`` on the rising
    branch, ``-theta_T`` on the falling one and 0 outside ``(T_LB, T_UB)``.
    Requires ``gamma < 0``.
    """
    c = an.derive_coeffs(p.replace(T=T))
    if c.gamma >= 0:
        raise ValueError("threshold_slope needs gamma < 0")
    t_lb, t_ub, t_hat = bounds if bounds is not None else travel_bounds(p)
    if T <= t_lb or T >= t_ub:
        return 0.0
    if t_hat is not None and T < t_hat:
        return -(c.eta / c.gamma) / (1.0 + _w_of_T(c, T))
    return -p.theta_T


def travel_bounds(p: PatientParams) -> tuple:
    """``(T_LB, T_UB, T_hat)``; ``T_LB``/``T_hat`` are ``None`` if ``gamma >= 0``."""
    c = an.derive_coeffs(p)
    t_ub = (p.S_bar - p.x) / p.theta_T
    if c.gamma >= 0:
        return None, t_ub, None
    rx = c.rho * p.x
    t_lb = -(c.gamma / c.eta) * (p.x + math.expm1(-rx) / c.rho)
    if t_lb >= t_ub:
        return t_lb, t_ub, None

    def gap(T):
        # a_tilde(T) - A_bar(T); independent of x
        return (1.0 + _w_of_T(c, T)) / c.rho + (p.theta_T - c.eta / c.gamma) * T - p.S_bar

    t_hat = bisect(gap, t_lb, t_ub, xtol=ROOT_TOL, max_iter=MAX_ITER)
    return t_lb, t_ub, t_hat


def travel_profile(p: PatientParams, T_grid) -> TravelProfile:
    """Threshold and its travel-time derivative along ``T_grid``."""
    T_grid = np.asarray(T_grid, dtype=float)
    if T_grid.ndim != 1 or np.any(np.diff(T_grid) <= 0):
        raise ValueError("T_grid must be strictly increasing")
    t_lb, t_ub, t_hat = travel_bounds(p)
    prof = TravelProfile(T_UB=t_ub, T_LB=t_lb, T_hat=t_hat)
    c = an.derive_coeffs(p)
    for T in T_grid:
        q = p.replace(T=float(T))
        a, _ = unconstrained_threshold(q)
        slope = math.nan if c.gamma >= 0 else threshold_slope(q, float(T), (t_lb, t_ub, t_hat))
        prof.samples.append((float(T), a, slope))
    return prof


# ------------------------------------------------------------ capacity ----

def _workload_root(p, lo, hi, capacity):
    ftol = ROOT_TOL * min(1.0, capacity)
    a_lo, a_hi = min(lo, hi), max(lo, hi)
    return bisect(lambda a: an.workload_total(p, a) - capacity, a_lo, a_hi, xtol=0.0, ftol=ftol,
                  max_iter=MAX_ITER)


def shadow_price(p: PatientParams, a: float) -> float:
    """``-V'(a) / W_T'(a)``."""
    return -an.cost_rate_deriv(p, a) / an.workload_total_deriv(p, a)


def solve_capacitated(p: PatientParams, capacity: float) -> ThresholdSolution:
    """Cost-minimising threshold subject to ``W_T(a) <= capacity``.

    Raises
    ------
    InfeasibleError
        If even the workload-minimising threshold exceeds ``capacity``.
    """
    fs = feasibility(p)
    if fs.w_min > capacity:
        raise InfeasibleError(fs.w_min, capacity)
    if fs.w_min == capacity:
        return _solution(p, fs.a_min, Regime.CAPACITY_BINDING)
    a_inf, regime = unconstrained_threshold(p)
    if an.workload_total(p, a_inf) <= capacity:
        return _solution(p, a_inf, regime)
    a = _workload_root(p, fs.a_min, a_inf, capacity)
    return _solution(p, a, Regime.CAPACITY_BINDING, shadow_price(p, a))


def gamma_of_Gamma(p: PatientParams, Gamma: float) -> float:
    """Marginal cost difference after adding ``Gamma`` to both holding costs."""
    return an.derive_coeffs(p).gamma + Gamma * (1.0 / p.theta_H - 1.0 / p.theta_R)


def verify_gamma_equivalence(p: PatientParams, capacity: float) -> GammaEquivalence:
    """Re-solve without the capacity constraint using costs shifted by the
    shadow price and compare with the constrained optimum."""
    sol = solve_capacitated(p, capacity)
    G = sol.gamma_shadow
    a_mod, _ = unconstrained_threshold(p.with_costs(G))
    return GammaEquivalence(
        a_capacitated=sol.a_star,
        Gamma=G,
        a_modified=a_mod,
        gamma=an.derive_coeffs(p).gamma,
        gamma_Gamma=gamma_of_Gamma(p, G),
    )


# ------------------------------------------------------------ quadratic ----

def _scan_min(f, lo, hi, n=2001, xtol=1e-8):
    if hi <= lo:
        return lo
    grid = np.linspace(lo, hi, n)
    vals = f(grid)
    i = int(np.argmin(vals))
    left = grid[max(i - 1, 0)]
    right = grid[min(i + 1, n - 1)]
    a = golden_min(lambda t: float(f(t)), left, right, xtol=xtol)
    return a if f(a) <= vals[i] else float(grid[i])


def feasible_interval(p: PatientParams, capacity: float) -> tuple[float, float]:
    """Sub-interval of ``[0, A_bar]`` on which ``W_T(a) <= capacity``."""
    fs = feasibility(p)
    if fs.w_min > capacity:
        raise InfeasibleError(fs.w_min, capacity)
    w0 = an.workload_total(p, 0.0)
    wa = an.workload_total(p, fs.A_bar)
    left = 0.0 if w0 <= capacity else _workload_root(p, 0.0, fs.a_min, capacity)
    right = fs.A_bar if wa <= capacity else _workload_root(p, fs.a_min, fs.A_bar, capacity)
    return left, right


def solve_quadratic(p: PatientParams, capacity: float | None = None) -> ThresholdSolution:
    """Numeric optimum for quadratic holding costs (golden section after a
    coarse scan); optionally subject to the workload capacity."""
    def f(a):
        return an.cost_rate_quadratic(p, a)

    a_bar = an.derive_coeffs(p).A_bar
    a_free = _scan_min(f, 0.0, a_bar)
    flags = []
    G = 0.0
    a, regime = a_free, None
    if capacity is not None:
        lo, hi = feasible_interval(p, capacity)
        if not lo <= a_free <= hi:
            a = _scan_min(f, lo, hi)
            h = 1e-6 * max(1.0, a)
            dv = (f(a + h) - f(a - h)) / (2 * h)
            G = max(0.0, -dv / an.workload_total_deriv(p, a))
            regime = Regime.CAPACITY_BINDING
    if regime is None:
        if a <= 1e-8:
            regime = Regime.IMMEDIATE_ONSITE
        elif a >= a_bar - 1e-8:
            regime = Regime.MAX_ALLOWABLE
        else:
            regime = Regime.INTERIOR
    if an.second_moments(p, a).m2_R_negative:
        flags.append("m2_R_negative")
    return _solution(p, a, regime, G, flags, cost=f(a))
