"""Strict JSON run configuration shared by the command-line subcommands.

Top-level keys::

    name, description        free text (optional)
    types                    list of patient-type objects (PatientParams keys,
                             arrival rate under "lambda")
    C                        total load capacity (optional; omitted = ample)
    quadratic                use quadratic holding costs (single type only)
    seed                     integer seed for simulation / bootstrap
    sweep                    {"var": "T"|"C"|"Gamma"|"x", "start", "stop", "step"}
                             or {"var", "values": [...]}
    simulation               see SimulationSpec
    estimate                 see EstimateSpec

Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .analytics import PatientParams
from .errors import ValidationError

SWEEP_VARS = ("T", "C", "Gamma", "x")


def _check_keys(block: dict, allowed, where: str, required=()):
    if not isinstance(block, dict):
        raise ValidationError(f"{where}: expected an object")
    unknown = set(block) - set(allowed)
    if unknown:
        raise ValidationError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = set(required) - set(block)
    if missing:
        raise ValidationError(f"{where}: missing key(s) {sorted(missing)}")


def _number(v, where, positive=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"{where}: expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ValidationError(f"{where}: must be > 0")
    return float(v)


def _types(raw, where):
    if not isinstance(raw, list) or not raw:
        raise ValidationError(f"{where}: expected a non-empty list of patient types")
    out = []
    for i, t in enumerate(raw):
        if not isinstance(t, dict):
            raise ValidationError(f"{where}[{i}]: expected an object")
        try:
            out.append(PatientParams.from_dict(t))
        except ValidationError as e:
            raise ValidationError(f"{where}[{i}]: {e}") from None
    return out


@dataclass
class SweepSpec:
    var: str
    values: np.ndarray

    @classmethod
    def from_dict(cls, d):
        _check_keys(d, ("var", "start", "stop", "step", "values"), "sweep", ("var",))
        var = d["var"]
        if var not in SWEEP_VARS:
            raise ValidationError(f"sweep.var must be one of {SWEEP_VARS}, got {var!r}")
        if "values" in d:
            if any(k in d for k in ("start", "stop", "step")):
                raise ValidationError("sweep: give either values or start/stop/step")
            vals = np.array([_number(v, "sweep.values") for v in d["values"]])
        else:
            _check_keys(d, ("var", "start", "stop", "step"), "sweep", ("var", "start", "stop", "step"))
            start = _number(d["start"], "sweep.start")
            stop = _number(d["stop"], "sweep.stop")
            step = _number(d["step"], "sweep.step", positive=True)
            if stop < start:
                raise ValidationError("sweep: stop must be >= start")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = start + step * np.arange(n)
        if vals.size == 0:
            raise ValidationError("sweep: empty range")
        if np.any(np.diff(vals) <= 0):
            raise ValidationError("sweep: values must be strictly increasing")
        return cls(var, vals)


@dataclass
class SimulationSpec:
    horizon: float = 1e4
    warmup_fraction: float = 0.1
    dt: float = 0.01
    onsite_slots: int | None = None
    bridge_correction: bool = True
    travel_noise_sigma: float = 0.0
    replications: int = 10
    thresholds: list | None = None
    design_types: list | None = None  # parameters the thresholds/slots are designed for
    policies: list = field(default_factory=lambda: [1, 2])
    event_log: str | None = None

    @classmethod
    def from_dict(cls, d):
        names = [f.name for f in fields(cls)]
        _check_keys(d, names, "simulation")
        kw = dict(d)
        for key in ("horizon", "dt"):
            if key in kw:
                kw[key] = _number(kw[key], f"simulation.{key}", positive=True)
        if "warmup_fraction" in kw:
            kw["warmup_fraction"] = _number(kw["warmup_fraction"], "simulation.warmup_fraction")
        if "travel_noise_sigma" in kw:
            kw["travel_noise_sigma"] = _number(kw["travel_noise_sigma"], "simulation.travel_noise_sigma")
        for key in ("onsite_slots", "replications"):
            v = kw.get(key)
            if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
                raise ValidationError(f"simulation.{key}: expected an integer")
        if "bridge_correction" in kw and not isinstance(kw["bridge_correction"], bool):
            raise ValidationError("simulation.bridge_correction: expected true/false")
        if kw.get("thresholds") is not None:
            kw["thresholds"] = [_number(a, "simulation.thresholds") for a in kw["thresholds"]]
        if kw.get("design_types") is not None:
            kw["design_types"] = _types(kw["design_types"], "simulation.design_types")
        pol = kw.get("policies", [1, 2])
        if not (isinstance(pol, list) and len(pol) == 2 and all(p in (1, 2) for p in pol)):
            raise ValidationError("simulation.policies: expected two entries from {1, 2}")
        return cls(**kw)


@dataclass
class EstimateSpec:
    data: str
    x: float | None = None
    a: float | None = None
    onsite_start: float | None = None
    bootstrap: int = 200
    type: int | None = None

    @classmethod
    def from_dict(cls, d):
        names = [f.name for f in fields(cls)]
        _check_keys(d, names, "estimate", ("data",))
        kw = dict(d)
        if not isinstance(kw["data"], str):
            raise ValidationError("estimate.data: expected a file path")
        for key in ("x", "a", "onsite_start"):
            if key in kw:
                kw[key] = _number(kw[key], f"estimate.{key}", positive=True, allow_none=True)
        b = kw.get("bootstrap", 200)
        if isinstance(b, bool) or not isinstance(b, int) or b < 0:
            raise ValidationError("estimate.bootstrap: expected a non-negative integer")
        t = kw.get("type")
        if t is not None and (isinstance(t, bool) or not isinstance(t, int)):
            raise ValidationError("estimate.type: expected an integer")
        return cls(**kw)


@dataclass
class RunConfig:
    types: list = field(default_factory=list)
    C: float | None = None
    quadratic: bool = False
    seed: int = 0
    sweep: SweepSpec | None = None
    simulation: SimulationSpec | None = None
    estimate: EstimateSpec | None = None
    name: str | None = None
    description: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check_keys(d, [f.name for f in fields(cls)], "config")
        kw = {}
        if "types" in d:
            kw["types"] = _types(d["types"], "types")
        if d.get("C") is not None:
            kw["C"] = _number(d["C"], "C", positive=True)
        if "quadratic" in d:
            if not isinstance(d["quadratic"], bool):
                raise ValidationError("quadratic: expected true/false")
            kw["quadratic"] = d["quadratic"]
        if "seed" in d:
            s = d["seed"]
            if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**32:
                raise ValidationError("seed: expected an integer in [0, 2**32)")
            kw["seed"] = s
        if d.get("sweep") is not None:
            kw["sweep"] = SweepSpec.from_dict(d["sweep"])
        if d.get("simulation") is not None:
            kw["simulation"] = SimulationSpec.from_dict(d["simulation"])
        if d.get("estimate") is not None:
            kw["estimate"] = EstimateSpec.from_dict(d["estimate"])
        for key in ("name", "description"):
            if key in d:
                if not isinstance(d[key], str):
                    raise ValidationError(f"{key}: expected a string")
                kw[key] = d[key]
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as e:
            raise ValidationError(f"cannot read config: {e}") from None
        except json.JSONDecodeError as e:
            raise ValidationError(f"config is not valid JSON: {e}") from None
        return cls.from_dict(raw)

    def require_types(self):
        if not self.types:
            raise ValidationError("config needs a non-empty 'types' list")
        return self.types
