"""Command-line front end: ``hybridcare {solve,sweep,simulate,estimate}``.

Exit codes: 0 success, 1 invalid input, 2 infeasible capacity,
3 parameters not identifiable from the data.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analytics as an
from . import estimation, simulator, solver
from .config import RunConfig
from .errors import DomainError, IdentifiabilityError, InfeasibleError, ValidationError
from .multitype import MultiInstance, solve_multitype

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_IDENTIFIABILITY = 0, 1, 2, 3


def fmt(v) -> str:
    """10 significant digits, locale independent."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.10g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------- solve ----

def _solve_point(types, C, quadratic):
    """Solve one design point; returns a dict with per-type and total values."""
    if quadratic:
        if len(types) != 1:
            raise ValidationError("quadratic costs are supported for a single type only")
        sol = solver.solve_quadratic(types[0], C)
        return _single_row(types[0], sol)
    if len(types) == 1:
        p = types[0]
        sol = solver.solve_capacitated(p, C) if C is not None else solver.solve_uncapacitated(p)
        return _single_row(p, sol)
    if C is None:
        sols = [solver.solve_uncapacitated(p) for p in types]
        a = [s.a_star for s in sols]
        w = np.array([s.workloads for s in sols])
        return {
            "a_star": a,
            "p_call_in": [s.call_in_prob for s in sols],
            "W_H": float(w[:, 0].sum()), "W_R": float(w[:, 1].sum()), "W_T": float(w[:, 2].sum()),
            "cost": float(sum(s.cost for s in sols)), "Gamma": 0.0,
            "regime": [s.regime.value for s in sols],
        }
    ms = solve_multitype(MultiInstance(types, C))
    return {
        "a_star": [float(a) for a in ms.a_star],
        "p_call_in": [an.call_in_prob(an.derive_coeffs(p), p.x, a) for p, a in zip(types, ms.a_star)],
        "W_H": float(ms.workloads[:, 0].sum()), "W_R": float(ms.workloads[:, 1].sum()),
        "W_T": ms.total_workload, "cost": ms.total_cost, "Gamma": ms.gamma_shadow,
        "interior_set": list(ms.interior), "constraint_active": ms.constraint_active,
        "method": ms.method, "degraded": ms.degraded,
        "per_type": [{"W_H": w[0], "W_R": w[1], "W_T": w[2], "cost": c}
                     for w, c in zip(ms.workloads.tolist(), ms.costs.tolist())],
    }


def _single_row(p, sol):
    d = sol.to_dict()
    return {
        "a_star": [d["a_star"]], "p_call_in": [d["p_call_in"]],
        "W_H": d["W_H"], "W_R": d["W_R"], "W_T": d["W_T"], "cost": d["cost"], "Gamma": d["Gamma"],
        "regime": [d["regime"]], "flags": d["flags"],
    }


def cmd_solve(cfg: RunConfig, args) -> int:
    types = cfg.require_types()
    report = {"status": "ok", "C": cfg.C, "quadratic": cfg.quadratic}
    report.update(_solve_point(types, cfg.C, cfg.quadratic))
    per = []
    for p in types:
        c = an.derive_coeffs(p)
        fe = solver.feasibility(p)
        per.append({"coeffs": vars(c), "workload_case": fe.case.number, "a0": fe.case.a0,
                    "a_min": fe.a_min, "w_min": fe.w_min})
    report["types"] = per
    if args.format == "csv":
        header = _row_header(len(types))[1:]
        row = _row_values("", report, len(types), True)[1:]
        _emit(_csv_text(header, [row]), args.out)
    else:
        _emit(_dump_json(report), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- sweep ----

def _row_header(K):
    return (["sweep_var"] + [f"a_star_{k + 1}" for k in range(K)] + [f"p_call_in_{k + 1}" for k in range(K)]
            + ["W_H", "W_R", "W_T", "cost", "Gamma", "feasible"])


def _row_values(v, res, K, feasible):
    if not feasible:
        return [v] + [math.nan] * (2 * K + 5) + [False]
    return ([v] + list(res["a_star"]) + list(res["p_call_in"])
            + [res["W_H"], res["W_R"], res["W_T"], res["cost"], res["Gamma"], True])


def _sweep_point(cfg: RunConfig, var: str, v: float):
    types, C = list(cfg.types), cfg.C
    if var == "T":
        types = [p.replace(T=v) for p in types]
    elif var == "x":
        types = [p.replace(x=v) for p in types]
    elif var == "C":
        C = v
    elif var == "Gamma":
        if v < 0:
            raise ValidationError("Gamma sweep values must be >= 0")
        types = [p.with_costs(v) for p in types]
        C = None
    try:
        res = _solve_point(types, C, cfg.quadratic)
    except InfeasibleError:
        return None
    if var == "Gamma":
        res["Gamma"] = v
    return res


def cmd_sweep(cfg: RunConfig, args) -> int:
    cfg.require_types()
    if cfg.sweep is None:
        raise ValidationError("sweep command needs a 'sweep' block")
    var, vals = cfg.sweep.var, cfg.sweep.values
    K = len(cfg.types)
    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as ex:
            results = list(ex.map(lambda v: _sweep_point(cfg, var, float(v)), vals))
    else:
        results = [_sweep_point(cfg, var, float(v)) for v in vals]
    rows = [_row_values(float(v), r, K, r is not None) for v, r in zip(vals, results)]
    if args.format == "json":
        header = _row_header(K)
        _emit(_dump_json({"var": var, "columns": header,
                          "rows": [dict(zip(header, r)) for r in rows]}), args.out)
    else:
        _emit(_csv_text(_row_header(K), rows), args.out)
    return EXIT_OK


# ------------------------------------------------------------- simulate ----

def build_sim_config(cfg: RunConfig, seed: int | None = None) -> simulator.SimConfig:
    """Simulation set-up from a run config.

    Thresholds and the slot count are designed on ``simulation.design_types``
    when given (otherwise on ``types``) and then applied to ``types``.
    """
    types = cfg.require_types()
    spec = cfg.simulation
    if spec is None:
        raise ValidationError("simulate command needs a 'simulation' block")
    design = spec.design_types or types
    if len(design) != len(types):
        raise ValidationError("design_types must have one entry per type")
    thresholds = spec.thresholds
    if thresholds is None:
        if cfg.C is None:
            thresholds = [solver.unconstrained_threshold(p)[0] for p in design]
        else:
            thresholds = list(solve_multitype(MultiInstance(design, cfg.C)).a_star)
    slots = spec.onsite_slots
    if slots is None:
        slots = simulator.design_slots(design, thresholds)
    C = cfg.C if cfg.C is not None else sys.float_info.max
    return simulator.SimConfig(
        instance=MultiInstance(types, C),
        thresholds=tuple(thresholds),
        horizon=spec.horizon,
        warmup_fraction=spec.warmup_fraction,
        dt=spec.dt,
        seed=cfg.seed if seed is None else seed,
        onsite_slots=slots,
        bridge_correction=spec.bridge_correction,
        travel_noise_sigma=spec.travel_noise_sigma,
        replications=spec.replications,
        event_log=spec.event_log is not None,
    )


SIM_CSV_HEADER = ("replication", "policy", "avg_cost", "swaps", "swap_violations", "call_ins",
                  "discharges", "buffer_entries", "occ_remote", "occ_onsite", "occ_buffer", "occ_travel")


def cmd_simulate(cfg: RunConfig, args) -> int:
    sc = build_sim_config(cfg, args.seed)
    pols = tuple(cfg.simulation.policies)
    cmp_ = simulator.compare_policies(sc, pols, threads=args.threads)
    rows = []
    for pol in dict.fromkeys(pols):
        for r in cmp_.results[pol].reps:
            occ = r.occupancy
            rows.append([r.replication, pol, r.avg_cost, r.swaps, r.swap_violations, sum(r.counts["call_ins"]),
                         sum(r.counts["discharges"]), sum(r.counts["buffer_entries"]), occ["Remote"],
                         occ["Onsite"], occ["Buffer"], occ["TravelIn"] + occ["TravelOut"]])
    summary = {
        "name": cfg.name,
        "thresholds": list(sc.thresholds),
        "onsite_slots": sc.slots(),
        "horizon": sc.horizon,
        "dt": sc.dt,
        "seed": sc.seed,
        "diffs": cmp_.diffs,
    }
    summary.update(cmp_.summary())
    if cfg.simulation.event_log:
        base = Path(cfg.simulation.event_log)
        for pol in dict.fromkeys(pols):
            log = cmp_.results[pol].reps[0].event_log
            simulator.write_event_log(log, base.with_name(f"{base.stem}_policy{pol}{base.suffix or '.csv'}"))
    if args.format == "json":
        summary["replications"] = [dict(zip(SIM_CSV_HEADER, r)) for r in rows]
        _emit(_dump_json(summary), args.out)
    else:
        _emit(_csv_text(SIM_CSV_HEADER, rows), args.out)
        if args.out:
            out = Path(args.out)
            out.with_name(out.stem + ".summary.json").write_text(_dump_json(summary))
        else:
            sys.stdout.write(_dump_json(summary))
    return EXIT_OK


# ------------------------------------------------------------- estimate ----

def cmd_estimate(cfg: RunConfig, args) -> int:
    spec = cfg.estimate
    if spec is None:
        raise ValidationError("estimate command needs an 'estimate' block")
    records = estimation.read_episodes(spec.data)
    seed = cfg.seed if args.seed is None else args.seed
    res = estimation.estimate_from_records(records, x=spec.x, a=spec.a, onsite_start=spec.onsite_start,
                                           type_filter=spec.type, n_boot=spec.bootstrap, rng=seed)
    _emit(_dump_json(res.to_dict()), args.out)
    return EXIT_OK


# ----------------------------------------------------------------- main ----

COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "simulate": cmd_simulate, "estimate": cmd_estimate}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; 2 means infeasible here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hybridcare", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"),
                        default="csv" if name in ("sweep", "simulate") else "json")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**32:
            raise ValidationError("--seed must lie in [0, 2**32)")
        cfg = RunConfig.load(args.config)
        return COMMANDS[args.command](cfg, args)
    except InfeasibleError as e:
        _emit(_dump_json({"status": "infeasible", "w_min": e.w_min, "C": e.capacity, "message": str(e)}),
              args.out)
        print(f"hybridcare: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except IdentifiabilityError as e:
        print(f"hybridcare: not identifiable: {e}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    except (ValidationError, DomainError) as e:
        print(f"hybridcare: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
