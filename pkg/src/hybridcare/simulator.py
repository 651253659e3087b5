"""Discrete-event simulation of the hybrid ward.

Patients of each type arrive as independent Poisson streams. A patient with a
positive threshold is first treated remotely; its score path is simulated on
an Euler grid (with Brownian-bridge crossing detection) until it is
discharged at 0 or called in at ``x + a``. Called-in patients travel to the
hospital and occupy one of a fixed number of on-site slots. When a patient
arrives to a full ward, one eligible on-site patient is swapped home
according to the swap policy; if nobody is eligible the arrival waits in a
FIFO pre-admission buffer.

Every patient draws from its own counter-based stream keyed by
``(seed, replication, type, arrival index)`` and arrivals use one stream per
type, so two policies run with the same seed see identical arrivals and
identical path noise for each patient (common random numbers).
"""
from __future__ import annotations

import csv
import enum
import heapq
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytics as an
from .errors import ValidationError
from .kernels import LOWER, UPPER, step_path, walk_path  # noqa: F401  (step_path re-exported)
from .multitype import MultiInstance, solve_multitype

ARRIVAL, REMOTE_EXIT, HOSPITAL_ARRIVAL, ONSITE_DISCHARGE, HOME_ARRIVAL, BUFFER_DISCHARGE = range(6)
_EVENT_NAMES = {
    ARRIVAL: "arrival",
    REMOTE_EXIT: "remote_exit",
    HOSPITAL_ARRIVAL: "hospital_arrival",
    ONSITE_DISCHARGE: "onsite_discharge",
    HOME_ARRIVAL: "home_arrival",
    BUFFER_DISCHARGE: "buffer_discharge",
}

_STREAM_PATIENT = 1
_STREAM_ARRIVAL = 2

# two-sided 97.5% Student-t quantiles for small replication counts
_T975 = {1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 7: 2.365, 8: 2.306, 9: 2.262,
         10: 2.228, 11: 2.201, 12: 2.179, 13: 2.160, 14: 2.145, 15: 2.131, 16: 2.120, 17: 2.110,
         18: 2.101, 19: 2.093, 20: 2.086, 25: 2.060, 30: 2.042, 40: 2.021, 60: 2.000, 120: 1.980}


def t_quantile(df: int) -> float:
    if df <= 0:
        return math.nan
    keys = sorted(_T975)
    for k in keys:
        if df <= k:
            return _T975[k]
    return 1.960


class Location(str, enum.Enum):
    REMOTE = "Remote"
    TRAVEL_IN = "TravelIn"
    ONSITE = "Onsite"
    BUFFER = "Buffer"
    TRAVEL_OUT = "TravelOut"
    DISCHARGED = "Discharged"


@dataclass
class SimConfig:
    instance: MultiInstance
    thresholds: tuple | None = None  # default: solve_multitype(instance)
    horizon: float = 1e4
    warmup_fraction: float = 0.1
    dt: float = 0.01
    seed: int = 0
    onsite_slots: int | None = None  # default: max(1, round(sum of W_H))
    bridge_correction: bool = True
    travel_noise_sigma: float = 0.0
    replications: int = 10
    event_log: bool = False

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValidationError("horizon must be > 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValidationError("warmup_fraction must lie in [0, 1)")
        if not self.dt > 0:
            raise ValidationError("dt must be > 0")
        if self.onsite_slots is not None and int(self.onsite_slots) < 1:
            raise ValidationError("onsite_slots must be >= 1")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**32):
            raise ValidationError("seed must be an integer in [0, 2**32)")
        if self.travel_noise_sigma < 0:
            raise ValidationError("travel_noise_sigma must be >= 0")
        if int(self.replications) < 1:
            raise ValidationError("replications must be >= 1")
        if self.thresholds is None:
            self.thresholds = tuple(float(a) for a in solve_multitype(self.instance).a_star)
        self.thresholds = tuple(float(a) for a in self.thresholds)
        if len(self.thresholds) != self.instance.K:
            raise ValidationError("need one threshold per patient type")
        for k, (p, a) in enumerate(zip(self.instance.types, self.thresholds)):
            a_bar = an.derive_coeffs(p).A_bar
            if not (0.0 <= a <= a_bar + 1e-9 * max(1.0, a_bar)):
                raise ValidationError(f"threshold of type {k} = {a!r} outside [0, {a_bar!r}]")

    def slots(self) -> int:
        if self.onsite_slots is not None:
            return int(self.onsite_slots)
        return design_slots(self.instance.types, self.thresholds)

    def replace(self, **changes) -> "SimConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return SimConfig(**values)


@dataclass
class PatientState:
    id: int
    k: int
    location: Location
    score: float
    barrier: float = math.inf
    swapped_before: bool = False
    accrued_cost: float = 0.0
    admitted_at: float = math.nan
    loc_since: float = 0.0
    version: int = 0
    path: np.ndarray | None = None
    path_t0: float = 0.0
    rng: np.random.Generator | None = None
    exit_side: int = 0

    def score_at(self, t: float, dt: float) -> float:
        """Score on a recorded (on-site or buffer) path at time ``t``."""
        if self.path is None:
            return self.score
        i = int((t - self.path_t0) / dt)
        return float(self.path[min(max(i, 0), len(self.path) - 1)])


@dataclass
class RepResult:
    replication: int
    avg_cost: float
    cost_by_location: dict
    occupancy: dict
    counts: dict  # per-type counters, lists indexed by type
    swaps: int
    swap_violations: int
    event_log: list | None = None


@dataclass
class SimResult:
    policy: int
    reps: list

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.avg_cost for r in self.reps])

    @property
    def mean_cost(self) -> float:
        return float(self.costs.mean())

    @property
    def se(self) -> float:
        c = self.costs
        return float(c.std(ddof=1) / math.sqrt(c.size)) if c.size > 1 else math.nan

    def mean_count(self, name: str) -> float:
        return float(np.mean([sum(r.counts[name]) for r in self.reps]))

    @property
    def mean_swaps(self) -> float:
        return float(np.mean([r.swaps for r in self.reps]))

    @property
    def mean_occupancy(self) -> dict:
        keys = self.reps[0].occupancy
        return {k: float(np.mean([r.occupancy[k] for r in self.reps])) for k in keys}

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "replications": len(self.reps),
            "mean_cost": self.mean_cost,
            "se": self.se,
            "mean_swaps": self.mean_swaps,
            "mean_swap_violations": float(np.mean([r.swap_violations for r in self.reps])),
            "mean_call_ins": self.mean_count("call_ins"),
            "mean_discharges": self.mean_count("discharges"),
            "mean_occupancy": self.mean_occupancy,
        }


@dataclass
class PolicyComparison:
    results: dict  # policy -> SimResult
    policies: tuple

    @property
    def diffs(self) -> np.ndarray:
        """Per-replication cost of the first policy minus the second."""
        a, b = self.policies
        return self.results[a].costs - self.results[b].costs

    @property
    def mean_diff(self) -> float:
        return float(self.diffs.mean())

    @property
    def se_diff(self) -> float:
        d = self.diffs
        return float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else math.nan

    @property
    def ci95(self) -> tuple:
        h = t_quantile(self.diffs.size - 1) * self.se_diff
        return self.mean_diff - h, self.mean_diff + h

    @property
    def improvement_pct(self) -> float:
        base = self.results[self.policies[0]].mean_cost
        return 100.0 * self.mean_diff / base if base else 0.0

    def summary(self) -> dict:
        lo, hi = self.ci95
        return {
            "policies": list(self.policies),
            "per_policy": [self.results[p].summary() for p in self.policies],
            "mean_diff": self.mean_diff,
            "se_diff": self.se_diff,
            "ci95": [lo, hi],
            "improvement_pct": self.improvement_pct,
        }


# ------------------------------------------------------------- helpers ----

def swap_index(params: an.PatientParams, s_j: float, a_j: float) -> float:
    """Expected cost of finishing treatment at home from post-travel score
    ``s_j`` with call-in threshold ``a_j`` (travel home included)."""
    p = params
    if s_j <= 0.0:
        prob = 0.0
        s_j = 0.0
    else:
        rho = 2.0 * p.theta_R / p.sigma_R**2
        prob = an.call_in_prob(rho, s_j, a_j)
    travel = p.h_T * p.T
    remote = p.h_R / p.theta_R * ((1.0 - prob) * s_j - prob * a_j)
    onsite = (travel + p.h_H / p.theta_H * (a_j + s_j + p.theta_T * p.T)) * prob
    return remote + travel + onsite


def select_swap(policy: int, eligible, types=None, thresholds=None):
    """Id of the on-site patient to send home, or ``None``.

    Policy 1 picks the lowest current score; policy 2 the lowest
    :func:`swap_index`. Ties go to the earliest admission, then lowest id.
    """
    if not eligible:
        return None
    if policy == 1:
        key = lambda s: (s.score, s.admitted_at, s.id)  # noqa: E731
    elif policy == 2:
        if types is None or thresholds is None:
            raise ValidationError("policy 2 needs the type parameters and thresholds")

        def key(s):
            p = types[s.k]
            return (swap_index(p, s.score + p.theta_T * p.T, thresholds[s.k]), s.admitted_at, s.id)
    else:
        raise ValidationError(f"unknown policy {policy!r}")
    return min(eligible, key=key).id


def design_slots(types, thresholds) -> int:
    """Slot count for a design: the on-site offered load, rounded, at least 1."""
    load = sum(an.workloads(p, a)[0] for p, a in zip(types, thresholds))
    return max(1, int(round(load)))


def _philox(seed, rep, kind, k, n):
    key = ((seed << 32 | rep) << 64) | (kind << 56 | k << 40 | n)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------- simulation ----

class _Run:
    def __init__(self, cfg: SimConfig, policy: int, rep: int):
        self.cfg = cfg
        self.policy = policy
        self.rep = rep
        self.types = cfg.instance.types
        self.K = len(self.types)
        self.a = cfg.thresholds
        self.dt = cfg.dt
        self.H = cfg.horizon
        self.t_w = cfg.warmup_fraction * cfg.horizon
        self.slots = cfg.slots()
        self.busy = 0
        self.heap = []
        self.seq = 0
        self.patients = {}
        self.onsite = {}
        self.buffer = deque()
        self.next_id = 0
        self.n_arrived = [0] * self.K
        self.cost = {loc.value: 0.0 for loc in Location if loc is not Location.DISCHARGED}
        self.occ = dict.fromkeys(self.cost, 0.0)
        names = ("arrivals", "discharges", "remote_discharges", "onsite_discharges",
                 "buffer_discharges", "call_ins", "direct_admissions", "swapped_out",
                 "buffer_entries", "in_system")
        self.counts = {n: [0] * self.K for n in names}
        self.swaps = 0
        self.violations = 0
        self.log = [] if cfg.event_log else None
        self.arrival_rng = [_philox(cfg.seed, rep, _STREAM_ARRIVAL, k, 0) for k in range(self.K)]

    # -- bookkeeping
    def push(self, t, etype, pid, version=0):
        self.seq += 1
        heapq.heappush(self.heap, (t, self.seq, etype, pid, version))

    def rate(self, pat):
        p = self.types[pat.k]
        loc = pat.location
        if loc is Location.REMOTE:
            return p.h_R
        if loc in (Location.TRAVEL_IN, Location.TRAVEL_OUT):
            return p.h_T
        if loc in (Location.ONSITE, Location.BUFFER):
            return p.h_H
        return 0.0

    def accrue(self, pat, t):
        if pat.location is Location.DISCHARGED:
            return
        r = self.rate(pat)
        pat.accrued_cost += r * (t - pat.loc_since)
        overlap = min(t, self.H) - max(pat.loc_since, self.t_w)
        if overlap > 0:
            self.cost[pat.location.value] += r * overlap
            self.occ[pat.location.value] += overlap

    def move(self, pat, loc, t):
        self.accrue(pat, t)
        pat.location = loc
        pat.loc_since = t

    def emit(self, t, pat, event):
        if self.log is not None:
            self.log.append((t, pat.id, pat.k, event, pat.score, pat.location.value))

    # -- paths
    def run_path(self, pat, start, upper, drift, sigma, t, record):
        """Simulate until the path leaves (0, upper) or the horizon passes.

        Returns ``(exit_time, side, path)``; ``side`` is 0 if the horizon
        came first.
        """
        if upper <= start:
            return t, UPPER, (np.array([start]) if record else None)
        dt = self.dt
        max_steps = int(math.ceil((self.H - t) / dt)) + 1
        bridge = self.cfg.bridge_correction
        rng = pat.rng
        block = 256
        done = 0
        pieces = [np.array([start])] if record else None
        s = start
        while done < max_steps:
            z = rng.standard_normal(block)
            u = rng.random(block)
            out = np.empty(block + 1)
            k, code = walk_path(s, upper, z, u, drift, sigma, dt, bridge, out)
            if record:
                pieces.append(out[1 : k + 1])
            if code:
                path = np.concatenate(pieces) if record else None
                return t + (done + k - 0.5) * dt, code, path
            done += block
            s = out[block]
            block = min(block * 2, 8192)
        path = np.concatenate(pieces) if record else None
        return math.inf, 0, path

    def travel_shift(self, pat, score):
        p = self.types[pat.k]
        z = p.theta_T * p.T
        sig = self.cfg.travel_noise_sigma
        if sig > 0 and p.T > 0:
            floor = -score + 1e-9
            for _ in range(1000):
                cand = z + sig * math.sqrt(p.T) * pat.rng.standard_normal()
                if cand >= floor:
                    return cand
            return max(z, floor)
        return z

    # -- transitions
    def start_remote(self, pat, t, score):
        p = self.types[pat.k]
        pat.score = score
        pat.barrier = score + self.a[pat.k]
        pat.path = None
        self.move(pat, Location.REMOTE, t)
        te, side, _ = self.run_path(pat, score, pat.barrier, p.theta_R, p.sigma_R, t, False)
        if side:
            pat.version += 1
            self.push(te, REMOTE_EXIT, pat.id, pat.version)
            pat.exit_side = side

    def start_travel_in(self, pat, t, score):
        p = self.types[pat.k]
        self.move(pat, Location.TRAVEL_IN, t)
        pat.path = None
        pat.score = score + self.travel_shift(pat, score)
        pat.version += 1
        self.push(t + p.T, HOSPITAL_ARRIVAL, pat.id, pat.version)

    def admit(self, pat, t, score):
        p = self.types[pat.k]
        self.busy += 1
        self.onsite[pat.id] = pat
        pat.score = score
        pat.admitted_at = t
        self.move(pat, Location.ONSITE, t)
        te, side, path = self.run_path(pat, score, math.inf, p.theta_H, p.sigma_H, t, True)
        pat.path, pat.path_t0 = path, t
        pat.version += 1
        if side:
            self.push(te, ONSITE_DISCHARGE, pat.id, pat.version)

    def discharge(self, pat, t, counter):
        self.move(pat, Location.DISCHARGED, t)
        pat.score = 0.0
        pat.path = None
        pat.rng = None
        self.counts["discharges"][pat.k] += 1
        self.counts[counter][pat.k] += 1
        del self.patients[pat.id]

    def swap_out(self, pat, t):
        p = self.types[pat.k]
        s_now = pat.score_at(t, self.dt)
        del self.onsite[pat.id]
        self.busy -= 1
        pat.swapped_before = True
        pat.version += 1
        self.swaps += 1
        self.counts["swapped_out"][pat.k] += 1
        if s_now + p.theta_T * p.T + self.a[pat.k] > p.S_bar:
            self.violations += 1
        pat.score = s_now
        pat.path = None
        self.move(pat, Location.TRAVEL_OUT, t)
        self.emit(t, pat, "swap_out")
        pat.score = s_now + self.travel_shift(pat, s_now)
        self.push(t + p.T, HOME_ARRIVAL, pat.id, pat.version)

    # -- event handlers
    def on_arrival(self, k, t):
        p = self.types[k]
        gap = self.arrival_rng[k].exponential(1.0 / p.lam)
        if t + gap <= self.H:
            self.push(t + gap, ARRIVAL, k)
        n = self.n_arrived[k]
        self.n_arrived[k] += 1
        pat = PatientState(id=self.next_id, k=k, location=Location.REMOTE, score=p.x, loc_since=t,
                           rng=_philox(self.cfg.seed, self.rep, _STREAM_PATIENT, k, n))
        self.next_id += 1
        self.patients[pat.id] = pat
        self.counts["arrivals"][k] += 1
        self.emit(t, pat, "arrival")
        if self.a[k] > 0.0:
            self.start_remote(pat, t, p.x)
        else:
            self.counts["direct_admissions"][k] += 1
            self.start_travel_in(pat, t, p.x)

    def on_remote_exit(self, pat, t):
        if pat.exit_side == LOWER:
            pat.score = 0.0
            self.emit(t, pat, "remote_discharge")
            self.discharge(pat, t, "remote_discharges")
        else:
            pat.score = pat.barrier
            self.counts["call_ins"][pat.k] += 1
            self.emit(t, pat, "call_in")
            self.start_travel_in(pat, t, pat.barrier)

    def on_hospital_arrival(self, pat, t):
        self.emit(t, pat, "hospital_arrival")
        if self.busy < self.slots:
            self.admit(pat, t, pat.score)
            return
        eligible = [q for q in self.onsite.values() if not q.swapped_before]
        for q in eligible:
            q.score = q.score_at(t, self.dt)
        j = select_swap(self.policy, eligible, self.types, self.a)
        if j is not None:
            self.swap_out(self.onsite[j], t)
            self.admit(pat, t, pat.score)
            return
        # nobody can be swapped: wait in the buffer, drifting as if remote
        p = self.types[pat.k]
        self.counts["buffer_entries"][pat.k] += 1
        self.buffer.append(pat.id)
        self.move(pat, Location.BUFFER, t)
        te, side, path = self.run_path(pat, pat.score, math.inf, p.theta_R, p.sigma_R, t, True)
        pat.path, pat.path_t0 = path, t
        pat.version += 1
        if side:
            self.push(te, BUFFER_DISCHARGE, pat.id, pat.version)

    def on_onsite_discharge(self, pat, t):
        del self.onsite[pat.id]
        self.busy -= 1
        pat.score = 0.0
        self.emit(t, pat, "onsite_discharge")
        self.discharge(pat, t, "onsite_discharges")
        if self.buffer:
            nxt = self.patients[self.buffer.popleft()]
            s = nxt.score_at(t, self.dt)
            nxt.path = None
            nxt.score = s
            self.emit(t, nxt, "buffer_admit")
            self.admit(nxt, t, s)

    def on_home_arrival(self, pat, t):
        self.emit(t, pat, "home_arrival")
        self.start_remote(pat, t, pat.score)

    def on_buffer_discharge(self, pat, t):
        self.buffer.remove(pat.id)
        pat.score = 0.0
        self.emit(t, pat, "buffer_discharge")
        self.discharge(pat, t, "buffer_discharges")

    def run(self) -> RepResult:
        for k, p in enumerate(self.types):
            if p.lam > 0:
                t0 = self.arrival_rng[k].exponential(1.0 / p.lam)
                if t0 <= self.H:
                    self.push(t0, ARRIVAL, k)
        handlers = {
            REMOTE_EXIT: self.on_remote_exit,
            HOSPITAL_ARRIVAL: self.on_hospital_arrival,
            ONSITE_DISCHARGE: self.on_onsite_discharge,
            HOME_ARRIVAL: self.on_home_arrival,
            BUFFER_DISCHARGE: self.on_buffer_discharge,
        }
        heap = self.heap
        while heap and heap[0][0] <= self.H:
            t, _, etype, pid, version = heapq.heappop(heap)
            if etype == ARRIVAL:
                self.on_arrival(pid, t)
                continue
            pat = self.patients.get(pid)
            if pat is None or pat.version != version:
                continue
            handlers[etype](pat, t)
        for pat in self.patients.values():
            self.accrue(pat, self.H)
            pat.loc_since = self.H
            self.counts["in_system"][pat.k] += 1
        window = self.H - self.t_w
        total = sum(self.cost.values())
        return RepResult(
            replication=self.rep,
            avg_cost=total / window,
            cost_by_location={k: v / window for k, v in self.cost.items()},
            occupancy={k: v / window for k, v in self.occ.items()},
            counts=self.counts,
            swaps=self.swaps,
            swap_violations=self.violations,
            event_log=self.log,
        )


def run_replication(config: SimConfig, policy: int, rep: int) -> RepResult:
    return _Run(config, policy, rep).run()


def simulate(config: SimConfig, policy: int = 2, threads: int = 1) -> SimResult:
    """Run ``config.replications`` independent replications of one policy."""
    if policy not in (1, 2):
        raise ValidationError(f"unknown policy {policy!r}")
    reps = range(config.replications)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(lambda r: run_replication(config, policy, r), reps))
    else:
        out = [run_replication(config, policy, r) for r in reps]
    out.sort(key=lambda r: r.replication)
    return SimResult(policy, out)


def compare_policies(config: SimConfig, policies=(1, 2), threads: int = 1) -> PolicyComparison:
    """Run both policies on common random numbers and pair the replications."""
    policies = tuple(policies)
    if len(policies) != 2:
        raise ValidationError("compare exactly two policies")
    results = {}
    for pol in dict.fromkeys(policies):
        results[pol] = simulate(config, pol, threads)
    return PolicyComparison(results, policies)


EVENT_LOG_HEADER = ("time", "patient_id", "type", "event", "score", "location")


def write_event_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_LOG_HEADER)
        for t, pid, k, ev, s, loc in rows:
            w.writerow((repr(float(t)), pid, k, ev, repr(float(s)), loc))
