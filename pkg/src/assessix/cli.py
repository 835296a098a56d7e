"""Command-line entry point: ``assessix --cmd {evaluate,verify,dual-audit}``.

Exit codes: 0 pass, 1 verification failure, 2 input error.  Reports are
JSON (or CSV value tables), written with sorted keys so reruns with the
same scenario, configuration and seed are byte-identical.  Timing goes to
stderr only.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._report import CheckReport, _jsonable
from .acceptance import check_family_axioms, index_to_family, roundtrip_check
from .consistency import FAMILIES, bellman_check, strong_consistency_check
from .duality import refinement_audit
from .errors import AssessixError, InvalidSpace, NotAdapted, NotAPartition, SchemaError, AdaptednessError, UnknownIndex
from .extended import Monotone, MonotoneFn, continuous_version, galois_check, inverse
from .indices import INDEX_NAMES, cumulative_future, dglr_regions, get_index
from .processes import (D_to_gamma, Discounting, dual_grid_processes, gamma_to_D, index_path, pairing,
                        representation_consistency_check, supermartingale_check)
from .sampling import fresh_future, random_process, random_space
from .space import AdaptedProcess, FilteredSpace, check_local

SUITES = ("locality", "duality", "galois", "gamma-d", "bellman", "strong-consistency",
          "dual-refinement", "representation")
AUDIT_THRESHOLDS = {"dglr": 0.05, "entropic": 1e-3, "oce": 1e-3}


# ---------------------------------------------------------------------------
# scenario input


class Scenario:
    def __init__(self, space: FilteredSpace, processes: dict, variables: dict, path: str | None):
        self.space = space
        self.processes = processes
        self.variables = variables
        self.path = path

    def describe(self) -> dict:
        return {"path": self.path, "n_atoms": self.space.n_atoms, "T": self.space.T,
                "processes": sorted(self.processes), "variables": sorted(self.variables)}


def parse_scenario(data, path: str | None = None) -> Scenario:
    """Validate a scenario document and build its space and positions.

    Raises
    ------
    SchemaError
        On missing keys, wrong types or an invalid filtration.
    AdaptednessError
        If a process row is not measurable at its time.
    """
    if not isinstance(data, dict):
        raise SchemaError("scenario must be a JSON object")
    for key in ("probs", "partitions"):
        if key not in data:
            raise SchemaError(f"scenario is missing {key!r}")
    probs, parts = data["probs"], data["partitions"]
    if not isinstance(probs, list) or not all(isinstance(p, (int, float)) for p in probs):
        raise SchemaError("probs must be a list of numbers")
    if not isinstance(parts, list) or not all(
            isinstance(P, list) and all(isinstance(c, list) and all(isinstance(i, int) for i in c) for c in P)
            for P in parts):
        raise SchemaError("partitions must be a list of lists of atom-index lists")
    try:
        space = FilteredSpace(probs, parts)
    except (InvalidSpace, NotAPartition, ValueError) as e:
        raise SchemaError(f"invalid filtration: {e}") from e
    processes = {}
    for name, rows in sorted((data.get("processes") or {}).items()):
        arr = np.asarray(rows, dtype=float) if _is_matrix(rows) else None
        if arr is None or arr.shape != (space.T + 1, space.n_atoms):
            raise SchemaError(f"process {name!r} must have {space.T + 1} rows of {space.n_atoms} values")
        try:
            processes[name] = AdaptedProcess(space, arr)
        except NotAdapted as e:
            raise AdaptednessError(f"process {name!r}: {e}") from e
    variables = {}
    for name, vals in sorted((data.get("variables") or {}).items()):
        if not isinstance(vals, list) or len(vals) != space.n_atoms or not all(
                isinstance(v, (int, float)) for v in vals):
            raise SchemaError(f"variable {name!r} must list {space.n_atoms} numbers")
        variables[name] = np.asarray(vals, dtype=float)
    return Scenario(space, processes, variables, path)


def _is_matrix(rows) -> bool:
    return isinstance(rows, list) and all(
        isinstance(r, list) and all(isinstance(v, (int, float)) for v in r) for r in rows)


def load_scenario(path: str) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise SchemaError(f"cannot read scenario: {e}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"scenario is not valid JSON: {e}") from e
    return parse_scenario(data, path)


def _params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise SchemaError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = float(v)
        except ValueError:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# commands


def _cells(space: FilteredSpace, t: int, values: np.ndarray) -> list:
    return [{"atoms": idx.tolist(), "value": values[idx[0]]} for idx in space.cells(t)]


def cmd_evaluate(args, scen: Scenario) -> tuple[dict, bool]:
    spec = get_index(args.index, **_params(args.param))
    S = scen.space
    ts = [args.t] if args.t is not None else list(range(S.T + 1))
    rows = []
    targets = [("process", n, X) for n, X in scen.processes.items()]
    targets += [("variable", n, x) for n, x in scen.variables.items()]
    for kind, name, X in targets:
        for t in ts:
            if not 0 <= t <= S.T:
                raise SchemaError(f"t={t} outside [0, {S.T}]")
            try:
                v = np.asarray(spec(S, X, t), dtype=float)
            except AssessixError as e:
                rows.append({"kind": kind, "name": name, "t": t, "error": f"{type(e).__name__}: {e}"})
                continue
            except ValueError as e:
                rows.append({"kind": kind, "name": name, "t": t, "error": str(e)})
                continue
            row = {"kind": kind, "name": name, "t": t, "values": v, "cells": _cells(S, t, v)}
            if spec.name == "dglr":
                row["regions"] = dglr_regions(S, X, t)
            rows.append(row)
    return {"index": spec.describe(), "results": rows}, True


def _pool(args, scen: Scenario, rng: np.random.Generator) -> list:
    pool = list(scen.processes.values())
    pool += [random_process(scen.space, rng) for _ in range(args.samples or 20)]
    return pool


def _suite_locality(S, pool, rng, args) -> CheckReport:
    reports = []
    for name in INDEX_NAMES:
        idx = get_index(name)
        for t in range(S.T):
            reports.append(check_local(lambda X, t=t, idx=idx: idx(S, X, t), S, t, pool, seed=args.seed))
    return _merge("locality", reports)


def _suite_duality(S, pool, rng, args) -> CheckReport:
    reports = []
    P = AdaptedProcess(S, np.stack([p.values for p in pool]), validate=False)
    for name in ("dglr", "entropic", "weighted_var"):
        idx = get_index(name)
        for t in range(S.T):
            vals = np.asarray(idx(S, P, t))
            fam = index_to_family(S, lambda X, t=t, idx=idx: idx(S, X, t), t, np.unique(vals), P, name)
            reports.append(roundtrip_check(fam))
            reports.append(check_family_axioms(fam, rng, n_pairs=20, n_lambda=9, n_monotone=10))
    return _merge("duality", reports)


def load_galois_fixtures() -> dict:
    text = resources.files("assessix").joinpath("data/galois_fixtures.json").read_text()
    return json.loads(text)


def _monotone(spec: dict) -> Monotone:
    if "linear" in spec:
        return Monotone.linear(*spec["linear"])
    if "constant" in spec:
        return Monotone.constant(spec["constant"])
    tail = lambda x: tuple(x) if isinstance(x, list) else x
    return Monotone.from_vertices([tuple(v) for v in spec["vertices"]], tail(spec.get("left", "flat")),
                                  tail(spec.get("right", "flat")), spec.get("side", "upper"))


def fixture_functions() -> list[tuple[str, MonotoneFn]]:
    data = load_galois_fixtures()
    return [(f["name"], MonotoneFn([_monotone(a) for a in f["atoms"]])) for f in data["fixtures"]]


def _suite_galois(S, pool, rng, args) -> CheckReport:
    g = load_galois_fixtures()["grid"]
    grid = np.concatenate([[-np.inf], np.linspace(g["lo"], g["hi"], g["n"]), [np.inf]])
    reports = []
    for name, F in fixture_functions():
        rep = galois_check(F, grid, grid)
        viol = list(rep.violations)
        for side in ("left", "right"):
            twice = inverse(inverse(F, side), side)
            for a, (f2, f) in enumerate(zip(twice.atoms, continuous_version(F, side).atoms)):
                if not f2.same_graph(f):
                    viol.append({"rule": f"double {side} inverse", "fixture": name, "atom": a})
        reports.append(CheckReport(f"galois:{name}", not viol, rep.checked, 0.0, viol))
    return _merge("galois", reports)


def _random_discount(S: FilteredSpace, t: int, rng: np.random.Generator) -> Discounting:
    d = np.ones((S.T + 1, S.n_atoms))
    for s in range(t + 1, S.T + 1):
        lv = S.labels(s - 1)
        step = rng.integers(0, 5, size=len(S.cells(s - 1))) / 4.0
        d[s] = np.minimum(d[s - 1], step[lv])
    return Discounting(S, t, d)


def _suite_gamma_d(S, pool, rng, args) -> CheckReport:
    viol = []
    checked = 0
    reports = []
    for t in range(S.T + 1):
        for X in pool:
            D = _random_discount(S, t, rng)
            g = D_to_gamma(D)
            if not np.array_equal(gamma_to_D(g).d, D.d):
                viol.append({"kind": "round trip", "t": t})
            pairing(D, X, t)
            pairing(g, X, t)
            checked += 1
        try:
            pairs = dual_grid_processes(S, t, 0.5, max_pairs=20_000)
        except ValueError:
            pairs = dual_grid_processes(S, t, 1.0, max_pairs=200_000)
        for Q, D in pairs:
            reports.append(supermartingale_check(Q, D))
    reports.append(CheckReport("gamma_d_bijection", not viol, checked, 0.0, viol))
    return _merge("gamma-d", reports)


def _family(args, T: int):
    name = args.index if args.index in FAMILIES else "entropic"
    return FAMILIES[name](T)


def _suite_bellman(S, pool, rng, args) -> CheckReport:
    return bellman_check(S, _family(args, S.T), pool, tol=1e-6)


def _suite_strong(S, pool, rng, args, scen=None) -> CheckReport:
    pairs = []
    for X in pool:
        t = int(rng.integers(0, max(S.T, 1)))
        pairs.append((X, fresh_future(S, X, t, rng)))
    if scen is not None:
        names = sorted(scen.processes)
        pairs += [(scen.processes[a], scen.processes[b]) for a in names for b in names if a != b]
    return strong_consistency_check(S, _family(args, S.T), pairs)


def _suite_refinement(S, pool, rng, args) -> CheckReport:
    two = FilteredSpace([0.5, 0.5], [[[0, 1]]])
    x = np.array([2.0, -1.0])
    reports = []
    for name in ("dglr", "entropic"):
        idx = get_index(name)
        rep = refinement_audit(two, 0, idx.dual_risk, x, idx(two, x, 0), samples=args.samples or 0,
                               seed=args.seed, tol=args.tol)
        if rep.max_error > AUDIT_THRESHOLDS[name]:
            rep.passed = False
            rep.violations.append({"kind": "final gap above threshold", "gap": rep.max_error})
        rep.name = f"dual_refinement:{name}"
        reports.append(rep)
    return _merge("dual-refinement", reports)


def _suite_representation(S, pool, rng, args) -> CheckReport:
    idx = get_index("entropic")
    path = lambda space, X, t: index_path(space, idx, X, t)
    return _merge("representation", [representation_consistency_check(S, path, pool, t, rng)
                                      for t in range(S.T + 1)])


def _merge(name: str, reports: list) -> CheckReport:
    viol = []
    for r in reports:
        viol += [{"check": r.name, **v} for v in r.violations[:3]]
    errs = [r.max_error for r in reports if np.isfinite(r.max_error)]
    return CheckReport(name, all(r.passed for r in reports), sum(r.checked for r in reports),
                       max(errs) if errs else 0.0, viol[:20], {"parts": len(reports)})


def cmd_verify(args, scen: Scenario) -> tuple[dict, bool]:
    rng = np.random.default_rng(args.seed)
    S = scen.space
    pool = _pool(args, scen, rng)
    wanted = SUITES if args.suites in (None, "all") else tuple(s.strip() for s in args.suites.split(","))
    for s in wanted:
        if s not in SUITES:
            raise SchemaError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    runners = {"locality": _suite_locality, "duality": _suite_duality, "galois": _suite_galois,
               "gamma-d": _suite_gamma_d, "bellman": _suite_bellman,
               "strong-consistency": lambda *a: _suite_strong(*a, scen=scen),
               "dual-refinement": _suite_refinement, "representation": _suite_representation}
    out = {}
    for s in wanted:
        t0 = time.perf_counter()
        out[s] = runners[s](S, pool, np.random.default_rng([args.seed, SUITES.index(s)]), args).to_dict()
        print(f"[verify] {s}: {'pass' if out[s]['passed'] else 'FAIL'} "
              f"({time.perf_counter() - t0:.2f}s)", file=sys.stderr)
    ok = all(r["passed"] for r in out.values())
    return {"suites": out, "pool_size": len(pool)}, ok


def audit_schedule(h: float) -> list[float]:
    return [c for c in (0.05, 0.02) if c > h] + [h]


def cmd_dual_audit(args, scen: Scenario) -> tuple[dict, bool]:
    spec = get_index(args.index, **_params(args.param))
    if spec.dual_risk is None:
        raise UnknownIndex(f"index {spec.name!r} has no registered dual risk function")
    S = scen.space
    t = args.t or 0
    schedule = audit_schedule(args.grid_h)
    threshold = AUDIT_THRESHOLDS.get(spec.name, args.tol)
    targets = [(n, cumulative_future(X, t)) for n, X in scen.processes.items()]
    targets += sorted(scen.variables.items())
    rows = {}
    ok = True
    for name, x in targets:
        direct = np.asarray(spec(S, x, t), dtype=float)
        rep = refinement_audit(S, t, spec.dual_risk, x, direct, schedule, args.samples or 0, args.seed, args.tol)
        within = rep.max_error <= threshold
        ok &= rep.passed and within
        rows[name] = {**rep.to_dict(), "direct": _jsonable(direct), "threshold": threshold,
                      "within_threshold": within}
    return {"index": spec.describe(), "t": t, "schedule": schedule, "grid": {"kind": "lattice", "steps": schedule,
            "dirichlet_samples": args.samples or 0, "seed": args.seed}, "audits": rows}, ok


# ---------------------------------------------------------------------------
# output


def to_csv(command: str, body: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if command == "evaluate":
        w.writerow(["kind", "name", "t", "atom", "value"])
        for r in body["results"]:
            for a, v in enumerate(r.get("values", [])):
                w.writerow([r["kind"], r["name"], r["t"], a, _jsonable(float(v))])
    elif command == "verify":
        w.writerow(["suite", "passed", "checked", "max_error"])
        for s, r in sorted(body["suites"].items()):
            w.writerow([s, r["passed"], r["checked"], r["max_error"]])
    else:
        w.writerow(["name", "h", "grid_size", "gap", "min_gap"])
        for n, r in sorted(body["audits"].items()):
            for lv in r["details"]["levels"]:
                w.writerow([n, lv["h"], lv["grid_size"], lv["gap"], lv["min_gap"]])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="assessix", description="Evaluate and audit conditional assessment indices.")
    p.add_argument("--scenario", help="scenario JSON (probs, partitions, processes, variables)")
    p.add_argument("--cmd", choices=("evaluate", "verify", "dual-audit"), required=True)
    p.add_argument("--index", default="entropic", help="dglr, entropic, oce, weighted_var (families: mixed_entropic)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="index parameter, repeatable")
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--grid-h", type=float, default=0.01)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--expect-negative", action="store_true",
                   help="mark a failing verification as an expected negative result")
    p.add_argument("--suites", default="all", help=f"comma list from {', '.join(SUITES)}")
    return p


def run(args) -> tuple[str, int]:
    if args.tol <= 0 or args.grid_h <= 0:
        raise SchemaError("tolerances and grid steps must be positive")
    if args.scenario:
        scen = load_scenario(args.scenario)
    elif args.cmd == "verify":
        S = random_space(np.random.default_rng(args.seed), max_atoms=8, max_T=3)
        scen = Scenario(S, {}, {}, None)
    else:
        raise SchemaError(f"--scenario is required for {args.cmd}")
    if args.cmd != "verify" or args.index not in FAMILIES:
        get_index(args.index, **_params(args.param))
    cmd = {"evaluate": cmd_evaluate, "verify": cmd_verify, "dual-audit": cmd_dual_audit}[args.cmd]
    body, ok = cmd(args, scen)
    status = "PASS" if ok else ("EXPECTED_NEGATIVE" if args.expect_negative else "FAIL")
    config = {k: v for k, v in sorted(vars(args).items()) if k != "out"}
    report = {"tool": "assessix", "version": __version__, "command": args.cmd, "seed": args.seed,
              "config": config, "scenario": scen.describe(), "status": status, **body}
    if args.format == "csv":
        text = to_csv(args.cmd, _jsonable(body))
    else:
        text = json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
    return text, 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        text, code = run(args)
    except (SchemaError, AdaptednessError, UnknownIndex) as e:
        print(f"input error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"[{args.cmd}] finished in {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
