"""Experiment runner.

JSON configs (version "duality-lab/1") describe a space, market, utility and
the checks to run; results go to report.json and report.csv with 12
significant digits, LF line endings, and bytes independent of --jobs.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, bridge, stability
from .duality import (
    SolverError,
    conjugacy_check,
    dual_derivative,
    dual_relation_check,
    dual_solve,
    primal_solve,
)
from .market import MarketError, build_market, check_nflvr
from .space import FilteredSpace, check_stopping_time, sigma_algebra_at
from .utility import log_utility, power_utility, table_utility

__all__ = ["main", "run", "validate"]

_VERSION = "duality-lab/1"
_KNOWN_KEYS = {
    "version", "space", "market", "utility", "tau", "xi", "eta", "sequence",
    "checks", "tolerances", "seed", "out",
}
_KNOWN_CHECKS = ("duality", "stability", "nets", "minimax")


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    return f"{x:.12g}"


def _to_jsonable(obj):
    """Floats to 12-significant-digit strings rendered as bare numbers."""
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return _RawNum(_fmt(float(obj)))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class _RawNum:
    def __init__(self, text):
        self.text = text


def _dump_json(obj, fh, indent=0):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            fh.write("{}")
            return
        fh.write("{\n")
        for i, (k, v) in enumerate(obj.items()):
            fh.write(f'{pad}  {json.dumps(k)}: ')
            _dump_json(v, fh, indent + 1)
            fh.write(",\n" if i < len(obj) - 1 else "\n")
        fh.write(pad + "}")
    elif isinstance(obj, list):
        if not obj:
            fh.write("[]")
            return
        fh.write("[\n")
        for i, v in enumerate(obj):
            fh.write(pad + "  ")
            _dump_json(v, fh, indent + 1)
            fh.write(",\n" if i < len(obj) - 1 else "\n")
        fh.write(pad + "]")
    elif isinstance(obj, _RawNum):
        fh.write(obj.text)
    else:
        fh.write(json.dumps(obj))


def _parse_config(path):
    errors = []
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    if raw.get("version") != _VERSION:
        errors.append(f'version must be "{_VERSION}"')
    for key in raw:
        if key not in _KNOWN_KEYS:
            errors.append(f"unknown key {key!r}")
    parsed = {}

    sp = raw.get("space")
    if not isinstance(sp, dict) or "prob" not in sp or "partitions" not in sp:
        errors.append("space must provide prob and partitions")
    else:
        try:
            parsed["space"] = FilteredSpace(sp["prob"], sp["partitions"])
        except (ValueError, TypeError) as exc:
            errors.append(f"space: {exc}")

    mk = raw.get("market")
    if "space" in parsed:
        if not isinstance(mk, dict) or "dM" not in mk or "lam" not in mk:
            errors.append("market must provide dM and lam")
        else:
            try:
                parsed["market"] = build_market(parsed["space"], mk["dM"], mk["lam"])
            except MarketError as exc:
                # a failing density is an arbitrage symptom, not a config typo
                parsed["market_failure"] = str(exc)

    ut = raw.get("utility", {"kind": "log"})
    try:
        kind = ut.get("kind", "log")
        if kind == "log":
            parsed["utility"] = log_utility()
        elif kind == "power":
            parsed["utility"] = power_utility(float(ut["p"]))
        elif kind == "table":
            parsed["utility"] = table_utility(
                ut["points"], float(ut.get("ae_bound", 0.9))
            )
        else:
            errors.append(f"unknown utility kind {kind!r}")
    except (KeyError, ValueError, TypeError) as exc:
        errors.append(f"utility: {exc}")

    if "space" in parsed:
        space = parsed["space"]
        n = space.n_scenarios
        tau_spec = raw.get("tau", {"t": 0})
        if isinstance(tau_spec, dict) and "t" in tau_spec:
            tau = np.full(n, int(tau_spec["t"]))
        else:
            tau = np.asarray(tau_spec, dtype=int)
        if tau.size != n or not check_stopping_time(space, tau):
            errors.append("tau is not a stopping time for this filtration")
        else:
            parsed["tau"] = tau
        parsed["xi"] = raw.get("xi", 1.0)
        parsed["eta"] = raw.get("eta", 1.0)
        seqspec = raw.get("sequence")
        if seqspec is not None and "market" in parsed:
            try:
                delta = np.asarray(seqspec["delta"], dtype=float)
                parsed["sequence"] = stability.MarketSequence(
                    parsed["market"], delta, seqspec.get("decay", "1/n"),
                    int(seqspec.get("N_max", 64)),
                )
            except (KeyError, ValueError, TypeError) as exc:
                errors.append(f"sequence: {exc}")

    checks = raw.get("checks", ["duality"])
    for c in checks:
        if c not in _KNOWN_CHECKS:
            errors.append(f"unknown check {c!r}")
    parsed["checks"] = [c for c in checks if c in _KNOWN_CHECKS]
    if "stability" in parsed["checks"] and "sequence" not in parsed:
        errors.append("stability check requires a sequence spec")
    parsed["tolerances"] = raw.get("tolerances", {})
    parsed["seed"] = int(raw.get("seed", 0))
    return parsed, errors


def _check_duality(parsed, tol_scale):
    m, u = parsed["market"], parsed["utility"]
    tau, xi, eta = parsed["tau"], parsed["xi"], parsed["eta"]
    tols = parsed["tolerances"]
    primal = primal_solve(m, u, tau, xi)
    dual = dual_solve(m, u, tau, eta)
    conj = conjugacy_check(m, u, tau, eta, n_grid=32)
    rel = dual_relation_check(m, u, tau, xi)
    deriv = dual_derivative(m, u, tau, eta)
    t_conj = float(tols.get("conjugacy", 2e-3)) * tol_scale
    t_rel = float(tols.get("dual_relation", 1e-6)) * tol_scale
    t_der = float(tols.get("derivative", 1e-4)) * tol_scale
    passed = conj <= t_conj and rel <= t_rel and deriv.max_rel_gap <= t_der
    return {
        "u": primal.atom_values_u,
        "v": dual.atom_values_v,
        "u_prime": primal.u_prime,
        "v_prime": dual.v_prime,
        "X_hat_T": primal.X_hat,
        "Y_hat_T": dual.Y_hat,
        "conjugacy_residual": conj,
        "conjugacy_tolerance": t_conj,
        "dual_relation_residual": rel,
        "dual_relation_tolerance": t_rel,
        "derivative_rel_gap": deriv.max_rel_gap,
        "derivative_tolerance": t_der,
        "kkt_residual": max(primal.kkt_residual, dual.kkt_residual),
        "pass": bool(passed),
    }, passed


def _check_stability(parsed, tol_scale):
    seq, u = parsed["sequence"], parsed["utility"]
    tau, eta = parsed["tau"], parsed["eta"]
    xi = parsed["xi"]
    tol = float(parsed["tolerances"].get("stability", 1e-3)) * tol_scale
    rep = stability.run_stability_experiment(seq, u, tau, float(xi), eta)
    passed = rep.monotone_after(4) and rep.final_below(tol)
    return {
        "columns": {k: v for k, v in rep.columns().items()},
        "v_compactness_bound": rep.v_compactness_bound,
        "monotone_after_4": rep.monotone_after(4),
        "final_tolerance": tol,
        "final_below": rep.final_below(tol),
        "pass": bool(passed),
    }, passed, rep


def _check_nets(parsed, tol_scale):
    space, u = parsed["space"], parsed["utility"]
    tau = parsed["tau"]
    tols = parsed["tolerances"]
    r = float(tols.get("net_radius", 1e-2)) * tol_scale
    seed = parsed["seed"]
    G = sigma_algebra_at(space, tau)
    K = analysis.ConvexCompactSet.order_interval(space, G, 0.5, 2.0)
    net = analysis.ftau_convex_net(K, r, seed=seed)
    viol, worst = analysis.net_cover_certificate(K, net, r, "convex",
                                                 seed=seed + 1)
    pnet = analysis.partition_subconvex_net(K, r, seed=seed)
    pviol, pworst = analysis.net_cover_certificate(K, pnet, r, "partition",
                                                   seed=seed + 1)
    passed = viol == 0 and pviol == 0
    return {
        "radius": r,
        "convex_net_size": len(net),
        "convex_violations": viol,
        "convex_worst_distance": worst,
        "partition_net_size": len(pnet),
        "partition_violations": pviol,
        "partition_worst_distance": pworst,
        "seed": seed,
        "pass": bool(passed),
    }, passed


def _check_minimax(parsed, tol_scale):
    m, u = parsed["market"], parsed["utility"]
    tau = parsed["tau"]
    eta = parsed["eta"]
    tol = float(parsed["tolerances"].get("minimax_error", 0.05)) * tol_scale
    rep = bridge.reconcile_minimax(m, u, tau, float(np.atleast_1d(eta)[0]))
    err = rep.grid_error()
    passed = (
        bool(np.all(rep.defect >= -1e-12))
        and rep.monotone_in_truncation()
        and float(err[:, -1].max()) <= tol
    )
    return {
        "steps": list(rep.steps),
        "truncations": list(rep.truncations),
        "v_trunc": rep.v_trunc,
        "defect": rep.defect,
        "grid_error": err,
        "grid_error_tolerance": tol,
        "reconciliation": rep.reconciliation,
        "monotone_in_truncation": rep.monotone_in_truncation(),
        "pass": bool(passed),
    }, passed


def run(config_path, out_dir=None, tol_scale=1.0, jobs=1, seed=None) -> int:
    try:
        parsed, errors = _parse_config(config_path)
        if errors:
            for e in errors:
                print(f"config error: {e}", file=sys.stderr)
            return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if seed is not None:
        parsed["seed"] = int(seed)
    out = Path(out_dir) if out_dir else Path(config_path).parent
    out.mkdir(parents=True, exist_ok=True)
    if "market_failure" in parsed or "market" not in parsed:
        detail = parsed.get("market_failure", "market missing")
        print(f"market_model: NFLVR check failed ({detail})", file=sys.stderr)
        return 3
    if not check_nflvr(parsed["market"]):
        print("market_model: NFLVR check failed", file=sys.stderr)
        return 3

    tasks = {}
    if "duality" in parsed["checks"]:
        tasks["duality"] = lambda: _check_duality(parsed, tol_scale)
    if "stability" in parsed["checks"]:
        tasks["stability"] = lambda: _check_stability(parsed, tol_scale)
    if "nets" in parsed["checks"]:
        tasks["nets"] = lambda: _check_nets(parsed, tol_scale)
    if "minimax" in parsed["checks"]:
        tasks["minimax"] = lambda: _check_minimax(parsed, tol_scale)

    results = {}
    stab_rep = None
    try:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            futures = {name: pool.submit(fn) for name, fn in tasks.items()}
            for name in tasks:  # fixed order, independent of completion order
                res = futures[name].result()
                if name == "stability":
                    results[name], _, stab_rep = res
                else:
                    results[name] = res[0]
    except (SolverError, RuntimeError, ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3

    all_pass = all(results[name]["pass"] for name in results)
    report = {
        "version": _VERSION,
        "config": str(Path(config_path).name),
        "seed": parsed["seed"],
        "tol_scale": tol_scale,
        "checks": results,
        "pass": bool(all_pass),
    }
    with open(out / "report.json", "w", newline="\n") as fh:
        _dump_json(_to_jsonable(report), fh)
        fh.write("\n")
    with open(out / "report.csv", "w", newline="\n") as fh:
        cols = ("n", "dZ", "dXT", "dXtau", "du", "dv", "dvprime", "ducp")
        fh.write(",".join(cols) + "\n")
        if stab_rep is not None:
            data = stab_rep.columns()
            for i in range(len(data["n"])):
                row = [str(int(data["n"][i]))] + [
                    _fmt(float(data[c][i])) for c in cols[1:]
                ]
                fh.write(",".join(row) + "\n")
    return 0 if all_pass else 1


def validate(config_path) -> int:
    try:
        parsed, errors = _parse_config(config_path)
        if "market_failure" in parsed:
            errors = errors + [f"market: {parsed['market_failure']}"]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    print("ok")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="duality-lab",
        description="run duality, stability, net and minimax experiments "
        "on finite tree markets",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)
    ap_run = sub.add_parser("run", help="execute the checks in a config")
    ap_run.add_argument("config")
    ap_run.add_argument("--out", default=None, help="output directory")
    ap_run.add_argument("--tol-scale", type=float, default=1.0)
    ap_run.add_argument("--jobs", type=int, default=1)
    ap_run.add_argument("--seed", type=int, default=None)
    ap_val = sub.add_parser("validate", help="parse and check a config")
    ap_val.add_argument("config")
    args = ap.parse_args(argv)
    if args.cmd == "run":
        return run(args.config, args.out, args.tol_scale, args.jobs, args.seed)
    return validate(args.config)


if __name__ == "__main__":
    sys.exit(main())
