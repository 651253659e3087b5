"""Two-type scenarios for comparing the swap policies.

Twelve scenarios in four groups (1-4) and three variants (a/b/c). They are
reconstructions from partial information, not reference inputs. Fixed per
group: arrival rates, remote drifts, remote holding costs, on-site drifts,
remote volatilities, the ceiling ``S_bar = 15``, ``theta_T = 0.1``, the capacity and
the ratio of per-trip travel costs of the two types. Everything else is our
choice and is the same across groups:

* on-site holding cost ``h_H = 350`` and ``sigma_H = 1`` for both types;
* per-trip travel cost ``h_T * T = 200`` times the group's travel-cost ratio;
* start scores and travel times picked so that both types are called in often
  enough to share the ward (``x = (0.5, 1)``, ``T = (80, 110)`` and so on).

Group 3's "b"/"c" variants do not follow the pattern of the other groups in
the source description, so all groups use the same recipe:
"a" is the design point, "b" halves both on-site drifts and "c" raises the
second type's remote volatility to 1.2. Thresholds and the slot count always
come from the "a" design.
"""
from __future__ import annotations

import json
from importlib import resources

from .analytics import PatientParams
from .config import RunConfig

H_H = 350.0
TRAVEL_COST_UNIT = 200.0

GROUPS = {
    1: dict(lam=2.0, theta_R=(0.2, 0.5), h_R=(450.0, 450.0), theta_H=(0.143, 0.25), C=15.0,
            travel_ratio=(1, 2), x=(0.5, 1.0), T=(80.0, 110.0)),
    2: dict(lam=4.0, theta_R=(0.2, 0.6), h_R=(420.0, 1530.0), theta_H=(0.5, 0.5), C=25.0,
            travel_ratio=(4, 1), x=(1.0, 1.0), T=(10.0, 10.0)),
    3: dict(lam=3.0, theta_R=(0.2, 0.6), h_R=(450.0, 450.0), theta_H=(0.143, 0.5), C=20.0,
            travel_ratio=(3, 1), x=(0.5, 1.0), T=(80.0, 110.0)),
    4: dict(lam=3.5, theta_R=(0.2, 0.5), h_R=(450.0, 450.0), theta_H=(0.5, 0.25), C=20.0,
            travel_ratio=(1, 4), x=(0.5, 1.0), T=(10.0, 110.0)),
}
VARIANTS = ("a", "b", "c")
NAMES = tuple(f"{g}{v}" for g in GROUPS for v in VARIANTS)


def _types(g, theta_H=None, sigma_R=(1.0, 1.0)):
    d = GROUPS[g]
    theta_H = theta_H or d["theta_H"]
    return [
        PatientParams(lam=d["lam"], x=d["x"][k], T=d["T"][k], theta_R=d["theta_R"][k], theta_H=theta_H[k],
                      theta_T=0.1, sigma_R=sigma_R[k], h_R=d["h_R"][k], h_H=H_H,
                      h_T=TRAVEL_COST_UNIT * d["travel_ratio"][k] / d["T"][k], S_bar=15.0)
        for k in range(2)
    ]


def scenario_types(name: str):
    """``(types, design_types, C)`` of a scenario such as ``"2b"``."""
    g, v = int(name[0]), name[1:]
    if g not in GROUPS or v not in VARIANTS:
        raise KeyError(f"unknown scenario {name!r}; choose from {NAMES}")
    design = _types(g)
    if v == "a":
        types = design
    elif v == "b":
        types = _types(g, theta_H=tuple(t / 2 for t in GROUPS[g]["theta_H"]))
    else:
        types = _types(g, sigma_R=(1.0, 1.2))
    return types, design, GROUPS[g]["C"]


def scenario_dict(name: str, horizon=1e4, dt=0.01, replications=10, seed=2024) -> dict:
    types, design, C = scenario_types(name)
    return {
        "name": f"swap-{name}",
        "description": "Two-type swap-policy scenario; a reconstruction, "
                       "not reference inputs (see hybridcare.swap_scenarios).",
        "types": [p.to_dict() for p in types],
        "C": C,
        "seed": seed,
        "simulation": {
            "horizon": horizon,
            "dt": dt,
            "warmup_fraction": 0.1,
            "replications": replications,
            "design_types": [p.to_dict() for p in design],
            "policies": [1, 2],
        },
    }


def load_scenario(name: str) -> RunConfig:
    """Packaged scenario file as a :class:`RunConfig`."""
    text = resources.files("hybridcare").joinpath("scenarios", f"swap_{name}.json").read_text()
    return RunConfig.from_dict(json.loads(text))


def write_scenarios(directory) -> list:
    """(Re)generate the packaged JSON files."""
    from pathlib import Path

    out = []
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in NAMES:
        path = d / f"swap_{name}.json"
        path.write_text(json.dumps(scenario_dict(name), indent=2) + "\n")
        out.append(path)
    return out


if __name__ == "__main__":  # pragma: no cover
    import sys

    for p in write_scenarios(sys.argv[1] if len(sys.argv) > 1 else "scenarios"):
        print(p)
