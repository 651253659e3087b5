"""Several patient types sharing one load capacity.

Every type keeps its own threshold; the capacity couples them through a
single shadow price. ``solve_multitype`` searches that price by bisection:
for a trial price each type solves its own unconstrained problem with both
holding costs raised by the price, clamped to the interval between its
workload-minimising and its cost-minimising threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analytics as an
from . import solver
from .analytics import PatientParams
from .errors import InfeasibleError, ValidationError

GAMMA_HI_MAX = 2.0**60
LOAD_RTOL = 1e-8
STATIONARITY_RTOL = 1e-6


@dataclass(frozen=True)
class MultiInstance:
    types: tuple
    C: float

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        if len(self.types) < 1:
            raise ValidationError("need at least one patient type")
        for t in self.types:
            if not isinstance(t, PatientParams):
                raise ValidationError("types must be PatientParams")
        if not (isinstance(self.C, (int, float)) and math.isfinite(self.C) and self.C > 0):
            raise ValidationError(f"C must be a positive finite number, got {self.C!r}")

    @property
    def K(self) -> int:
        return len(self.types)

    def replace(self, **changes) -> "MultiInstance":
        return MultiInstance(changes.get("types", self.types), changes.get("C", self.C))


@dataclass(frozen=True)
class MultiFeasibility:
    per_type: tuple  # FeasibilitySummary per type
    w_min_total: float
    C: float

    @property
    def feasible(self) -> bool:
        return self.w_min_total <= self.C

    @property
    def a_min(self) -> np.ndarray:
        return np.array([f.a_min for f in self.per_type])


@dataclass
class MultiSolution:
    a_star: np.ndarray
    gamma_shadow: float
    interior: tuple
    workloads: np.ndarray  # (K, 3): W_H, W_R, W_T per type
    costs: np.ndarray
    constraint_active: bool
    method: str = "gamma-bisection"
    degraded: bool = False
    grid_slack: float = 0.0

    @property
    def total_cost(self) -> float:
        return float(self.costs.sum())

    @property
    def total_workload(self) -> float:
        return float(self.workloads[:, 2].sum())

    def to_dict(self) -> dict:
        return {
            "a_star": [float(a) for a in self.a_star],
            "Gamma": self.gamma_shadow,
            "interior_set": list(self.interior),
            "W_H": [float(w) for w in self.workloads[:, 0]],
            "W_R": [float(w) for w in self.workloads[:, 1]],
            "W_T": [float(w) for w in self.workloads[:, 2]],
            "costs": [float(c) for c in self.costs],
            "total_cost": self.total_cost,
            "constraint_active": self.constraint_active,
            "method": self.method,
            "degraded": self.degraded,
        }


@dataclass
class KKTReport:
    between: float
    active: float
    stationarity: float
    feasible: bool
    constraint_active: bool
    interior: tuple
    messages: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.messages


# -----------------------------------------------------------------------------

def multi_feasibility(inst: MultiInstance) -> MultiFeasibility:
    per = tuple(solver.feasibility(p) for p in inst.types)
    return MultiFeasibility(per, float(sum(f.w_min for f in per)), inst.C)


def _bounds(inst: MultiInstance, fe: MultiFeasibility | None = None):
    """Per-type (a_min, a_inf) pairs."""
    fe = fe or multi_feasibility(inst)
    a_inf = np.array([solver.unconstrained_threshold(p)[0] for p in inst.types])
    return fe.a_min, a_inf


def _interior(a, a_min, a_inf, tol=1e-12):
    out = []
    for k, (ak, lo, hi) in enumerate(zip(a, a_min, a_inf)):
        scale = tol * max(1.0, abs(ak))
        if abs(ak - lo) > scale and abs(ak - hi) > scale:
            out.append(k)
    return tuple(out)


def _assemble(inst, a, gamma_shadow, a_min, a_inf, active, **kw) -> MultiSolution:
    a = np.asarray(a, dtype=float)
    w = np.array([an.workloads(p, ak) for p, ak in zip(inst.types, a)])
    costs = np.array([an.cost_rate(p, ak) for p, ak in zip(inst.types, a)])
    return MultiSolution(
        a_star=a,
        gamma_shadow=float(gamma_shadow),
        interior=_interior(a, a_min, a_inf),
        workloads=w,
        costs=costs,
        constraint_active=active,
        **kw,
    )


def thresholds_at(inst: MultiInstance, Gamma: float, a_min=None, a_inf=None) -> np.ndarray:
    """Per-type thresholds for a trial shadow price ``Gamma``."""
    if a_min is None or a_inf is None:
        a_min, a_inf = _bounds(inst)
    out = np.empty(inst.K)
    for k, p in enumerate(inst.types):
        a, _ = solver.unconstrained_threshold(p.with_costs(Gamma))
        lo, hi = min(a_min[k], a_inf[k]), max(a_min[k], a_inf[k])
        out[k] = min(max(a, lo), hi)
    return out


def _total_load(inst, a):
    return float(sum(an.workload_total(p, ak) for p, ak in zip(inst.types, a)))


def _gamma_from_stationarity(inst, a, interior):
    vals = [-an.cost_rate_deriv(inst.types[k], a[k]) / an.workload_total_deriv(inst.types[k], a[k])
            for k in interior]
    return float(np.median(vals)) if vals else 0.0


def solve_multitype(inst: MultiInstance, oracle_grid: int = 400) -> MultiSolution:
    """Cost-minimising thresholds of all types under the shared capacity.

    Raises
    ------
    InfeasibleError
        If the minimal workloads already exceed the capacity.
    """
    fe = multi_feasibility(inst)
    if not fe.feasible:
        raise InfeasibleError(fe.w_min_total, inst.C)
    a_min, a_inf = _bounds(inst, fe)
    if _total_load(inst, a_inf) <= inst.C:
        return _assemble(inst, a_inf, 0.0, a_min, a_inf, active=False, method="unconstrained")
    if fe.w_min_total == inst.C:
        return _assemble(inst, a_min, 0.0, a_min, a_inf, active=True, method="single-point")

    def excess(G):
        return _total_load(inst, thresholds_at(inst, G, a_min, a_inf)) - inst.C

    lo, hi = 0.0, 1.0
    f_hi = excess(hi)
    while f_hi > 0.0 and hi < GAMMA_HI_MAX:
        lo, hi = hi, hi * 2.0
        f_hi = excess(hi)
    sol = None
    if f_hi <= 0.0:
        ftol = 1e-2 * LOAD_RTOL * inst.C
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f = excess(mid)
            if abs(f) <= ftol or hi - lo <= 4e-16 * hi:
                break
            if f > 0.0:
                lo = mid
            else:
                hi = mid
        # pick whichever end of the final bracket is closer to the capacity
        cands = [(abs(excess(g)), g) for g in (mid, lo, hi)]
        _, G = min(cands)
        a = thresholds_at(inst, G, a_min, a_inf)
        sol = _assemble(inst, a, G, a_min, a_inf, active=True)
        if kkt_check(inst, sol).passed:
            return sol
    if inst.K <= 3:
        alt = brute_force_multitype(inst, oracle_grid)
        alt.method = "oracle-fallback"
        alt.degraded = True
        return alt
    if sol is None:
        a = thresholds_at(inst, hi, a_min, a_inf)
        sol = _assemble(inst, a, hi, a_min, a_inf, active=True)
    sol.degraded = True
    return sol


def kkt_check(inst: MultiInstance, sol: MultiSolution, rtol: float = STATIONARITY_RTOL) -> KKTReport:
    """Check between-ness, the active constraint and a common multiplier on
    the interior set; each residual is reported alongside the verdict."""
    fe = multi_feasibility(inst)
    a_min, a_inf = _bounds(inst, fe)
    a = np.asarray(sol.a_star, dtype=float)
    msgs = []

    between = 0.0
    for k in range(inst.K):
        lo, hi = min(a_min[k], a_inf[k]), max(a_min[k], a_inf[k])
        between = max(between, lo - a[k], a[k] - hi, 0.0)
    if between > 1e-9 * max(1.0, float(np.max(np.abs(a)))):
        msgs.append(f"threshold outside [a_min, a_inf] by {between:.3g}")

    load = _total_load(inst, a)
    feasible = load <= inst.C * (1.0 + LOAD_RTOL)
    if not feasible:
        msgs.append(f"workload {load:.10g} exceeds capacity {inst.C:.10g}")
    unconstrained_ok = _total_load(inst, a_inf) <= inst.C
    active = abs(load - inst.C) / inst.C
    if unconstrained_ok:
        if sol.gamma_shadow != 0.0:
            msgs.append("non-binding capacity but nonzero shadow price")
        if np.max(np.abs(a - a_inf), initial=0.0) > 1e-9:
            msgs.append("non-binding capacity but thresholds differ from the unconstrained optimum")
    elif active > LOAD_RTOL:
        msgs.append(f"capacity not active: relative gap {active:.3g}")

    interior = _interior(a, a_min, a_inf)
    G = sol.gamma_shadow
    stat = 0.0
    if not (G >= 0.0):
        msgs.append(f"shadow price {G!r} is not >= 0")
    for k in interior:
        p = inst.types[k]
        r = abs(G + an.cost_rate_deriv(p, a[k]) / an.workload_total_deriv(p, a[k]))
        stat = max(stat, r / G if G > 0 else r)
    if interior and stat >= rtol:
        msgs.append(f"stationarity residual {stat:.3g} on interior set {interior}")
    return KKTReport(between=between, active=active, stationarity=stat, feasible=feasible,
                     constraint_active=not unconstrained_ok, interior=interior, messages=msgs)


def brute_force_multitype(inst: MultiInstance, grid_n: int = 400) -> MultiSolution:
    """Exhaustive grid search over the per-type threshold intervals (K <= 3).

    The returned ``grid_slack`` is the largest cost change between adjacent
    grid points, summed over types - the resolution of the oracle.
    """
    if inst.K > 3:
        raise ValidationError("brute_force_multitype supports at most 3 types")
    if grid_n < 2:
        raise ValidationError("grid_n must be >= 2")
    fe = multi_feasibility(inst)
    if not fe.feasible:
        raise InfeasibleError(fe.w_min_total, inst.C)
    a_min, a_inf = _bounds(inst, fe)
    grids, loads, costs = [], [], []
    slack = 0.0
    for k, p in enumerate(inst.types):
        lo, hi = min(a_min[k], a_inf[k]), max(a_min[k], a_inf[k])
        g = np.linspace(lo, hi, grid_n) if hi > lo else np.array([lo])
        # make sure a_min itself is on the grid so the feasible set is non-empty
        g[np.argmin(np.abs(g - a_min[k]))] = a_min[k]
        grids.append(g)
        loads.append(an.workload_total(p, g))
        v = an.cost_rate(p, g)
        costs.append(v)
        if v.size > 1:
            slack += float(np.max(np.abs(np.diff(v))))

    C = inst.C
    best = (math.inf, None)
    if inst.K == 1:
        v = np.where(loads[0] <= C, costs[0], np.inf)
        i = int(np.argmin(v))
        best = (v[i], (i,))
    elif inst.K == 2:
        w = loads[0][:, None] + loads[1][None, :]
        v = np.where(w <= C, costs[0][:, None] + costs[1][None, :], np.inf)
        i, j = np.unravel_index(int(np.argmin(v)), v.shape)
        best = (v[i, j], (i, j))
    else:
        w12 = loads[1][:, None] + loads[2][None, :]
        v12 = costs[1][:, None] + costs[2][None, :]
        for i in range(len(grids[0])):
            v = np.where(loads[0][i] + w12 <= C, costs[0][i] + v12, np.inf)
            j, l = np.unravel_index(int(np.argmin(v)), v.shape)
            if v[j, l] < best[0]:
                best = (v[j, l], (i, j, l))
    idx = best[1]
    a = np.array([grids[k][idx[k]] for k in range(inst.K)])
    active = _total_load(inst, a_inf) > C
    interior = _interior(a, a_min, a_inf)
    G = _gamma_from_stationarity(inst, a, interior) if active else 0.0
    return _assemble(inst, a, max(G, 0.0), a_min, a_inf, active=active, method="grid", grid_slack=slack)
