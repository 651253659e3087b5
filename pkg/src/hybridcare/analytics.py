"""Closed-form hitting-time quantities, workloads and the cost objective.

A remotely hospitalised patient's score follows ``x + sigma_R*B(t) - theta_R*t``
until it reaches 0 (discharge) or ``x + a`` (call-in). Called-in patients
travel for ``T`` time units, deteriorating by ``theta_T*T`` on average, and
then recover on-site with drift ``-theta_H`` until the score hits 0.

Functions that take a threshold ``a`` accept scalars or numpy arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ValidationError

_INV_E = 0.36787944117144233
_INV_E_LO = -1.2428753672788363e-17  # 1/e - _INV_E


@dataclass(frozen=True)
class PatientParams:
    """Primitives of one patient type.

    ``lam`` is the arrival rate (the JSON key is ``"lambda"``). ``sigma_H``
    only matters for quadratic costs and for simulation.
    """

    lam: float
    x: float
    T: float
    theta_R: float
    theta_H: float
    theta_T: float
    sigma_R: float
    h_R: float
    h_H: float
    h_T: float
    S_bar: float
    sigma_H: float = 1.0

    _positive = ("theta_R", "theta_H", "theta_T", "sigma_R", "sigma_H", "h_R", "h_H", "h_T", "S_bar", "x")

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ValidationError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value!r}")
        for name in self._positive:
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.T < 0:
            raise ValidationError(f"T must be >= 0, got {self.T!r}")
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam!r}")

    def with_costs(self, gamma_shift: float) -> "PatientParams":
        """Copy with ``gamma_shift`` added to both holding-cost rates."""
        return self.replace(h_R=self.h_R + gamma_shift, h_H=self.h_H + gamma_shift)

    def replace(self, **changes) -> "PatientParams":
        values = asdict(self)
        values.update(changes)
        return PatientParams(**values)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PatientParams":
        data = dict(data)
        if "lambda" in data:
            if "lam" in data:
                raise ValidationError("give either 'lambda' or 'lam', not both")
            data["lam"] = data.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown patient parameter(s): {sorted(unknown)}")
        missing = {f for f in known if f != "sigma_H"} - set(data)
        if missing:
            raise ValidationError(f"missing patient parameter(s): {sorted(missing)}")
        return cls(**{k: float(v) if isinstance(v, int) and not isinstance(v, bool) else v
                      for k, v in data.items()})


@dataclass(frozen=True)
class DerivedCoeffs:
    rho: float
    alpha: float
    beta: float
    gamma: float
    eta: float
    Delta: float
    A_bar: float


class QuadraticCoeffs(NamedTuple):
    vartheta: float
    delta: float
    phi: float
    psi: float


class SecondMoments(NamedTuple):
    m2_R: float | np.ndarray
    m2_H: float | np.ndarray
    m2_R_negative: bool


class Shape(enum.Enum):
    DECREASING = 1
    UNIMODAL = 2
    INCREASING = 3


@dataclass(frozen=True)
class WorkloadCase:
    """Shape of the total workload in the threshold; ``a0`` is its minimiser
    when the shape is unimodal."""

    shape: Shape
    a0: float | None = None

    def __post_init__(self):
        if (self.shape is Shape.UNIMODAL) != (self.a0 is not None):
            raise ValidationError("a0 must be given exactly for the unimodal shape")
        if self.a0 is not None and not self.a0 > 0:
            raise ValidationError("a0 must be positive")

    @property
    def number(self) -> int:
        return self.shape.value


def derive_coeffs(p: PatientParams) -> DerivedCoeffs:
    if not isinstance(p, PatientParams):
        raise ValidationError("expected PatientParams")
    rho = 2.0 * p.theta_R / p.sigma_R**2
    gamma = -p.h_R / p.theta_R + p.h_H / p.theta_H
    eta = p.h_T + p.h_H * p.theta_T / p.theta_H
    alpha = p.h_R * p.x / p.theta_R
    beta = -p.h_R * p.x / p.theta_R + p.h_T * p.T + p.h_H * (p.x + p.theta_T * p.T) / p.theta_H
    rx = rho * p.x
    delta = rho * p.theta_T * p.T / (rx + math.expm1(-rx))
    a_bar = max(0.0, p.S_bar - p.x - p.T * p.theta_T)
    return DerivedCoeffs(rho=rho, alpha=alpha, beta=beta, gamma=gamma, eta=eta, Delta=delta, A_bar=a_bar)


def _rho(coeffs) -> float:
    return float(getattr(coeffs, "rho", coeffs))


def call_in_prob(coeffs, x, a):
    """Probability that a remote episode ends in a call-in.

    ``(1 - exp(-rho x)) / (exp(rho a) - exp(-rho x))``, evaluated as
    ``-expm1(-rho x) exp(-rho a) / -expm1(-rho (x + a))`` so it never
    overflows. ``coeffs`` may be a :class:`DerivedCoeffs` or ``rho`` itself.
    """
    rho = _rho(coeffs)
    a = np.asarray(a, dtype=float)
    num = -np.expm1(-rho * x) * np.exp(-rho * a)
    den = -np.expm1(-rho * (x + a))
    out = num / den
    return float(out) if out.ndim == 0 else out


def call_in_prob_deriv(coeffs, x, a):
    """Derivative of :func:`call_in_prob` in ``a`` (always negative)."""
    rho = _rho(coeffs)
    a = np.asarray(a, dtype=float)
    p = np.asarray(call_in_prob(rho, x, a))
    out = -rho * p / (-np.expm1(-rho * (x + a)))
    return float(out) if out.ndim == 0 else out


def elos_remote(coeffs, theta_R, x, a):
    """Expected remote length of stay ``((1-p) x - p a) / theta_R``."""
    a = np.asarray(a, dtype=float)
    p = np.asarray(call_in_prob(coeffs, x, a))
    out = ((1.0 - p) * x - p * a) / theta_R
    return float(out) if out.ndim == 0 else out


def elos_onsite(p: PatientParams, a):
    """Expected on-site length of stay ``(x + a + T theta_T) / theta_H``."""
    out = (p.x + np.asarray(a, dtype=float) + p.T * p.theta_T) / p.theta_H
    return float(out) if np.ndim(out) == 0 else out


def workloads(p: PatientParams, a):
    """Offered loads ``(W_H, W_R, W_T)`` at threshold ``a``."""
    rho = 2.0 * p.theta_R / p.sigma_R**2
    a = np.asarray(a, dtype=float)
    prob = np.asarray(call_in_prob(rho, p.x, a))
    w_h = p.lam * prob * (p.x + a + p.T * p.theta_T) / p.theta_H
    w_r = p.lam / p.theta_R * ((1.0 - prob) * p.x - prob * a)
    w_t = w_h + w_r
    if w_t.ndim == 0:
        return float(w_h), float(w_r), float(w_t)
    return w_h, w_r, w_t


def workload_total(p: PatientParams, a):
    return workloads(p, a)[2]


def workload_derivs(p: PatientParams, a):
    """Derivatives ``(W_H', W_R', W_T')`` in ``a``."""
    rho = 2.0 * p.theta_R / p.sigma_R**2
    a = np.asarray(a, dtype=float)
    dp = np.asarray(call_in_prob_deriv(rho, p.x, a))
    # p / p' = -(1 - exp(-rho (a + x))) / rho
    ratio = np.expm1(-rho * (a + p.x)) / rho
    d_h = p.lam / p.theta_H * dp * (a + p.x + p.theta_T * p.T + ratio)
    d_r = -p.lam / p.theta_R * dp * (a + p.x + ratio)
    d_t = d_h + d_r
    if d_t.ndim == 0:
        return float(d_h), float(d_r), float(d_t)
    return d_h, d_r, d_t


def workload_total_deriv(p: PatientParams, a):
    return workload_derivs(p, a)[2]


def workload_shape_sign(p: PatientParams, a):
    """Expression whose sign equals the sign of ``W_T'(a)``.

    ``(1 - r)(1 - rho (a+x) - exp(-rho (a+x))) - theta_T T rho`` with
    ``r = theta_H / theta_R``. Unlike ``W_T'`` it does not underflow for
    large ``a``.
    """
    rho = 2.0 * p.theta_R / p.sigma_R**2
    r = p.theta_H / p.theta_R
    u = rho * (np.asarray(a, dtype=float) + p.x)
    out = (1.0 - r) * (-u - np.expm1(-u)) - p.theta_T * p.T * rho
    return float(out) if np.ndim(out) == 0 else out


def cost_rate(p: PatientParams, a, coeffs: DerivedCoeffs | None = None):
    """Long-run average cost ``lam (alpha + beta p + gamma p a)``."""
    c = coeffs or derive_coeffs(p)
    a = np.asarray(a, dtype=float)
    prob = np.asarray(call_in_prob(c.rho, p.x, a))
    out = p.lam * (c.alpha + c.beta * prob + c.gamma * prob * a)
    return float(out) if out.ndim == 0 else out


def cost_rate_direct(p: PatientParams, a):
    """The same cost assembled from expected stays and the call-in probability."""
    rho = 2.0 * p.theta_R / p.sigma_R**2
    a = np.asarray(a, dtype=float)
    prob = np.asarray(call_in_prob(rho, p.x, a))
    remote = np.asarray(elos_remote(rho, p.theta_R, p.x, a))
    onsite = np.asarray(elos_onsite(p, a))
    out = p.lam * (p.h_R * remote + (p.h_T * p.T + p.h_H * onsite) * prob)
    return float(out) if out.ndim == 0 else out


def cost_rate_deriv(p: PatientParams, a, coeffs: DerivedCoeffs | None = None):
    """``dV/da = lam |p'|/rho (gamma(1 - e^{-rho(x+a)}) - beta rho - gamma rho a)``."""
    c = coeffs or derive_coeffs(p)
    a = np.asarray(a, dtype=float)
    dp = np.abs(np.asarray(call_in_prob_deriv(c.rho, p.x, a)))
    bracket = -c.gamma * np.expm1(-c.rho * (p.x + a)) - c.beta * c.rho - c.gamma * c.rho * a
    out = p.lam * dp / c.rho * bracket
    return float(out) if out.ndim == 0 else out


def second_moments(p: PatientParams, a) -> SecondMoments:
    """Second moments of the remote and on-site stays, as printed in the
    quadratic-cost model.

    The remote expression ``(2/theta_R^2)(p - theta_R x / sigma_R^2)`` can be
    negative, which is not possible for a true second moment; such values are
    returned unchanged and ``m2_R_negative`` is set.
    """
    rho = 2.0 * p.theta_R / p.sigma_R**2
    a = np.asarray(a, dtype=float)
    prob = np.asarray(call_in_prob(rho, p.x, a))
    m2_r = 2.0 / p.theta_R**2 * (prob - p.theta_R * p.x / p.sigma_R**2)
    d = p.x + a + p.T * p.theta_T
    m2_h = d / p.theta_H**3 * p.sigma_H**2 + (d / p.theta_H) ** 2
    negative = bool(np.any(m2_r < 0))
    if m2_r.ndim == 0:
        return SecondMoments(float(m2_r), float(m2_h), negative)
    return SecondMoments(m2_r, m2_h, negative)


def quadratic_coeffs(p: PatientParams) -> QuadraticCoeffs:
    u = p.x + p.T * p.theta_T
    vartheta = -2.0 * p.lam * p.h_R * p.x / (p.theta_R * p.sigma_R**2)
    delta = p.lam * p.h_H * (p.sigma_H**2 / p.theta_H**3 + 2.0 * u / p.theta_H**2)
    phi = p.lam * p.h_H / p.theta_H**2
    psi = p.lam * (2.0 * p.h_R / p.theta_R**2 + p.h_T * p.T
                   + p.h_H * (u / p.theta_H**3 * p.sigma_H**2 + (u / p.theta_H) ** 2))
    return QuadraticCoeffs(vartheta, delta, phi, psi)


def cost_rate_quadratic(p: PatientParams, a, form: str = "coefficients"):
    """Long-run average cost with holding costs quadratic in the stay length.

    ``form="direct"`` assembles it from :func:`second_moments`;
    ``form="coefficients"`` uses ``vartheta + delta a p + phi a^2 p + psi p``.
    Both inherit the sign issue of the remote second moment.
    """
    rho = 2.0 * p.theta_R / p.sigma_R**2
    a = np.asarray(a, dtype=float)
    prob = np.asarray(call_in_prob(rho, p.x, a))
    if form == "direct":
        m = second_moments(p, a)
        out = p.lam * (p.h_R * np.asarray(m.m2_R) + (p.h_T * p.T + p.h_H * np.asarray(m.m2_H)) * prob)
    elif form == "coefficients":
        q = quadratic_coeffs(p)
        out = q.vartheta + q.delta * a * prob + q.phi * a * a * prob + q.psi * prob
    else:
        raise ValueError(f"unknown form {form!r}")
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------- Lambert W ----

def _lambert_w_scalar(z: float) -> float:
    if math.isnan(z):
        return math.nan
    if z == math.inf:
        return math.inf
    gap = (z + _INV_E) + _INV_E_LO  # z + 1/e
    if gap < 0.0:
        if gap > -1e-15:
            return -1.0
        raise DomainError(f"lambert_w: z={z!r} < -1/e")
    if z == 0.0:
        return 0.0
    if gap == 0.0:
        return -1.0
    if z < -0.32:
        q = math.sqrt(2.0 * math.e * gap)
        w = -1.0 + q * (1.0 + q * (-1.0 / 3.0 + q * (11.0 / 72.0 + q * (-43.0 / 540.0 + q * 769.0 / 17280.0))))
        if q < 1e-3:
            return w
    elif z < 3.0:
        w = math.log1p(z) * (1.0 - math.log1p(math.log1p(z)) / (2.0 + math.log1p(z)))
    else:
        l1 = math.log(z)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_next = w - step
        if w_next < -1.0:
            w_next = 0.5 * (w - 1.0)
        if abs(w_next - w) <= 4e-16 * (1.0 + abs(w_next)):
            return w_next
        w = w_next
    return w


def lambert_w(z):
    """Principal branch of the Lambert W function for real ``z >= -1/e``.

    Halley iteration from a series start near the branch point, a log-based
    start for moderate arguments and the asymptotic expansion for large ones.

    Raises
    ------
    DomainError
        If ``z < -1/e``.
    """
    if np.ndim(z) == 0:
        return _lambert_w_scalar(float(z))
    arr = np.asarray(z, dtype=float)
    return np.array([_lambert_w_scalar(v) for v in arr.ravel()]).reshape(arr.shape)
