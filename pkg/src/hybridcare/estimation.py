"""Fitting model parameters from length-of-stay and travel records.

* On-site stays are single-barrier hitting times, i.e. inverse Gaussian with
  mean ``x/theta_H`` and shape ``x^2/sigma_H^2``; fitted by maximum likelihood.
* Travel deterioration is the mean score change per unit travel time.
* Remote stays end at one of two barriers. The call-in fraction pins down
  ``rho = 2 theta_R / sigma_R^2`` (the call-in probability is monotone in
  ``rho``) and the mean stay then gives ``theta_R``.

Confidence intervals come from a nonparametric percentile bootstrap.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analytics import call_in_prob
from .errors import DegenerateDataError, IdentifiabilityError, ValidationError
from .roots import bisect

N_BOOT = 200
CI_LEVEL = 0.95


@dataclass
class OnsiteFit:
    theta_H: float
    sigma_H: float
    ig_mu: float
    ig_shape: float
    n: int
    se: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)


@dataclass
class TravelFit:
    theta_T: float
    n: int
    se: float
    negative: bool = False
    ci: dict = field(default_factory=dict)


@dataclass
class RemoteFit:
    theta_R: float
    sigma_R: float
    rho: float
    p_hat: float
    mean_los: float
    residuals: tuple
    n: int
    se: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)


@dataclass
class EstimatedParams:
    onsite: OnsiteFit | None = None
    travel: TravelFit | None = None
    remote: RemoteFit | None = None
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {}
        if self.onsite:
            o = self.onsite
            out["onsite"] = {"theta_H": o.theta_H, "sigma_H": o.sigma_H, "ig_mu": o.ig_mu,
                             "ig_shape": o.ig_shape, "n": o.n, "se": o.se, "ci": o.ci}
        if self.travel:
            t = self.travel
            out["travel"] = {"theta_T": t.theta_T, "n": t.n, "se": t.se, "negative": t.negative, "ci": t.ci}
        if self.remote:
            r = self.remote
            out["remote"] = {"theta_R": r.theta_R, "sigma_R": r.sigma_R, "rho": r.rho, "p_call_in": r.p_hat,
                             "mean_los": r.mean_los, "residuals": list(r.residuals), "n": r.n,
                             "se": r.se, "ci": r.ci}
        out["warnings"] = list(self.warnings)
        return out


# ----------------------------------------------------------- bootstrap ----

def bootstrap(stat, arrays, n_boot=N_BOOT, rng=None, level=CI_LEVEL):
    """Percentile bootstrap of a statistic returning a dict of floats.

    Resamples rows of the (equal-length) ``arrays`` jointly. Resamples on
    which ``stat`` raises are skipped. Returns ``(se, ci)`` dicts keyed like
    the statistic.
    """
    rng = np.random.default_rng(rng)
    n = len(arrays[0])
    draws = []
    for _ in range(n_boot):
        idx = rng.integers(0, n, n)
        try:
            draws.append(stat(*(a[idx] for a in arrays)))
        except (ValidationError, IdentifiabilityError, ZeroDivisionError):
            continue
    if not draws:
        return {}, {}
    keys = draws[0].keys()
    lo_q, hi_q = 100 * (1 - level) / 2, 100 * (1 + level) / 2
    se, ci = {}, {}
    for k in keys:
        v = np.array([d[k] for d in draws])
        se[k] = float(v.std(ddof=1)) if v.size > 1 else math.nan
        ci[k] = [float(np.percentile(v, lo_q)), float(np.percentile(v, hi_q))]
    return se, ci


# --------------------------------------------------------------- onsite ----

def _onsite_point(t, x):
    mu = float(t.mean())
    inv = float(np.mean(1.0 / t - 1.0 / mu))
    if not inv > 1e-12 / mu:
        raise DegenerateDataError("on-site stays have (numerically) zero spread")
    shape = 1.0 / inv
    return {"theta_H": x / mu, "sigma_H": x / math.sqrt(shape), "ig_mu": mu, "ig_shape": shape}


def fit_onsite(los_samples, x, n_boot=N_BOOT, rng=None) -> OnsiteFit:
    """Inverse-Gaussian MLE of on-site stays that start at score ``x``.

    Raises
    ------
    ValidationError
        Fewer than two samples, non-positive samples or ``x <= 0``.
    DegenerateDataError
        All samples (numerically) equal.
    """
    t = np.asarray(los_samples, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValidationError("need at least two on-site stays")
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise ValidationError("on-site stays must be positive and finite")
    if not x > 0:
        raise ValidationError("start score must be > 0")
    est = _onsite_point(t, x)
    se, ci = bootstrap(lambda s: _onsite_point(s, x), [t], n_boot, rng) if n_boot else ({}, {})
    return OnsiteFit(n=t.size, se=se, ci=ci, **est)


# --------------------------------------------------------------- travel ----

def fit_travel(score_pairs, T, n_boot=N_BOOT, rng=None) -> TravelFit:
    """Mean score change per unit travel time.

    A negative estimate (improvement while travelling) is returned unchanged
    with ``negative=True`` and a warning.
    """
    pairs = np.asarray(score_pairs, dtype=float)
    if pairs.size == 0:
        raise ValidationError("no travel records")
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValidationError("score_pairs must be (before, after) pairs")
    T = np.broadcast_to(np.asarray(T, dtype=float), (pairs.shape[0],))
    if np.any(T <= 0) or not np.all(np.isfinite(T)):
        raise ValidationError("travel time must be > 0")
    rate = (pairs[:, 1] - pairs[:, 0]) / T
    theta = float(rate.mean())
    se = float(rate.std(ddof=1) / math.sqrt(rate.size)) if rate.size > 1 else math.nan
    negative = theta < 0
    if negative:
        warnings.warn("estimated travel deterioration is negative", RuntimeWarning, stacklevel=2)
    ci = {}
    if n_boot and rate.size > 1:
        _, ci = bootstrap(lambda r: {"theta_T": float(r.mean())}, [rate], n_boot, rng)
    return TravelFit(theta_T=theta, n=rate.size, se=se, negative=negative, ci=ci)


# --------------------------------------------------------------- remote ----

def _check_rho_monotone(x, a, lo=1e-6, hi=1e3, n=200):
    grid = np.geomspace(lo, hi, n)
    p = np.array([call_in_prob(r, x, a) for r in grid])
    p = p[p > 0.0]  # far enough out the probability underflows to 0
    if p.size < 2 or not np.all(np.diff(p) < 0):
        raise IdentifiabilityError("call-in probability is not monotone in rho on the check grid")


def rho_from_fraction(p_hat, x, a) -> float:
    """Invert the call-in probability in ``rho`` for fixed ``x, a``."""
    p_max = x / (x + a)
    if not 0.0 < p_hat < p_max:
        raise IdentifiabilityError(
            f"call-in fraction {p_hat!r} outside the attainable range (0, {p_max:.6g})")

    def g(log_rho):
        return call_in_prob(math.exp(log_rho), x, a) - p_hat

    lo, hi = -30.0, 0.0
    while g(hi) > 0:
        hi += 5.0
        if hi > 50:
            raise IdentifiabilityError("call-in fraction too small to invert")
    while g(lo) < 0:
        lo -= 10.0
        if lo < -200:
            raise IdentifiabilityError("call-in fraction too close to its upper limit")
    return math.exp(bisect(g, lo, hi, xtol=1e-13, max_iter=300))


def _remote_point(los, flags, x, a):
    p_hat = float(flags.mean())
    mean = float(los.mean())
    if not mean > 0:
        raise IdentifiabilityError("mean remote stay must be > 0")
    rho = rho_from_fraction(p_hat, x, a)
    p = call_in_prob(rho, x, a)
    theta = ((1.0 - p) * x - p * a) / mean
    if not theta > 0:
        raise IdentifiabilityError("mean stay inconsistent with a positive drift")
    return {"theta_R": theta, "sigma_R": math.sqrt(2.0 * theta / rho), "rho": rho}


def fit_remote(los_samples, called_in_flags, x, a, n_boot=N_BOOT, rng=None) -> RemoteFit:
    """Moment-matching fit of remote drift and volatility.

    Raises
    ------
    IdentifiabilityError
        If nobody or everybody was called in, or the call-in fraction is not
        attainable for any ``rho > 0``.
    """
    los = np.asarray(los_samples, dtype=float)
    flags = np.asarray(called_in_flags).astype(bool).astype(float)
    if los.ndim != 1 or los.size == 0 or los.shape != flags.shape:
        raise ValidationError("need equal-length, non-empty stay and outcome arrays")
    if not np.all(np.isfinite(los)) or np.any(los < 0):
        raise ValidationError("remote stays must be finite and >= 0")
    if not (x > 0 and a > 0):
        raise ValidationError("x and a must be > 0")
    _check_rho_monotone(x, a)
    est = _remote_point(los, flags, x, a)
    p_fit = call_in_prob(est["rho"], x, a)
    mean_fit = ((1.0 - p_fit) * x - p_fit * a) / est["theta_R"]
    p_hat, mean = float(flags.mean()), float(los.mean())
    se, ci = (bootstrap(lambda l, f: _remote_point(l, f, x, a), [los, flags], n_boot, rng)
              if n_boot else ({}, {}))
    return RemoteFit(theta_R=est["theta_R"], sigma_R=est["sigma_R"], rho=est["rho"], p_hat=p_hat,
                     mean_los=mean, residuals=(p_fit - p_hat, mean_fit - mean), n=los.size, se=se, ci=ci)


# ------------------------------------------------------------------ CSV ----

CSV_COLUMNS = ("type", "station", "los", "called_in", "score_before_travel", "score_after_travel", "T")


def _opt_float(v, row, col):
    if v is None or v.strip() == "":
        return math.nan
    try:
        return float(v)
    except ValueError:
        raise ValidationError(f"row {row}: column {col!r} is not a number: {v!r}") from None


def read_episodes(path):
    """Read the episode CSV into per-station column arrays.

    ``station`` is one of ``remote`` (uses ``los``, ``called_in``),
    ``onsite`` (uses ``los``) or ``travel`` (uses the two scores and ``T``).
    """
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise ValidationError(f"cannot read data file: {e}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError("data file is empty")
        missing = set(CSV_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise ValidationError(f"data file lacks column(s) {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise ValidationError("data file has no records")
    out = []
    for i, r in enumerate(rows, start=2):
        station = (r["station"] or "").strip().lower()
        if station not in ("remote", "onsite", "travel"):
            raise ValidationError(f"row {i}: unknown station {r['station']!r}")
        try:
            k = int(r["type"]) if (r["type"] or "").strip() else 0
        except ValueError:
            raise ValidationError(f"row {i}: type must be an integer") from None
        ci = (r["called_in"] or "").strip().lower()
        if station == "remote" and ci not in ("0", "1", "true", "false"):
            raise ValidationError(f"row {i}: called_in must be 0/1")
        out.append((k, station, _opt_float(r["los"], i, "los"), ci in ("1", "true"),
                    _opt_float(r["score_before_travel"], i, "score_before_travel"),
                    _opt_float(r["score_after_travel"], i, "score_after_travel"),
                    _opt_float(r["T"], i, "T")))
    return out


def estimate_from_records(records, x=None, a=None, onsite_start=None, type_filter=None,
                          n_boot=N_BOOT, rng=None) -> EstimatedParams:
    """Fit whichever stations have data.

    The on-site start score defaults to ``x + a + theta_T * mean(T)`` when
    travel records exist.
    """
    if type_filter is not None:
        records = [r for r in records if r[0] == type_filter]
    rem = [r for r in records if r[1] == "remote"]
    ons = [r for r in records if r[1] == "onsite"]
    trv = [r for r in records if r[1] == "travel"]
    res = EstimatedParams()
    rng = np.random.default_rng(rng)
    if trv:
        pairs = np.array([(r[4], r[5]) for r in trv])
        T = np.array([r[6] for r in trv])
        if np.isnan(pairs).any() or np.isnan(T).any():
            raise ValidationError("travel rows need both scores and T")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res.travel = fit_travel(pairs, T, n_boot, rng)
        if res.travel.negative:
            res.warnings.append("negative travel deterioration estimate")
    if rem:
        if x is None or a is None:
            raise ValidationError("remote records need x and a in the estimate config")
        los = np.array([r[2] for r in rem])
        res.remote = fit_remote(los, np.array([r[3] for r in rem]), x, a, n_boot, rng)
    if ons:
        start = onsite_start
        if start is None and x is not None and a is not None and res.travel is not None:
            start = x + a + res.travel.theta_T * float(np.mean([r[6] for r in trv]))
        if start is None:
            raise ValidationError("on-site records need onsite_start (or x, a and travel records)")
        res.onsite = fit_onsite(np.array([r[2] for r in ons]), start, n_boot, rng)
    if res.travel is None and res.remote is None and res.onsite is None:
        raise ValidationError("no usable records")
    return res
