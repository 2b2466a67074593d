"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration or input, 3 blow-up when the
scenario declares it unexpected, 4 failed verification.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import barriers, riccati
from .config import ScenarioConfig, build_preset, mc_config
from .core import GrowthConstants
from .montecarlo import ConstantControl, EstimationError, estimate_cost, moment_check, optimize_policy
from .presets import PRESETS
from .solver import solve
from .suites import SUITES, run_suite
from .verification import max_relative_error

logger = logging.getLogger("quadhjb")

EXIT_OK, EXIT_INVALID, EXIT_BLOWUP, EXIT_VERIFY = 0, 2, 3, 4
OUTPUT_ENV = "QUADHJB_OUTPUT_DIR"

PRESET_HELP = "presets: " + ", ".join(PRESETS)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def dump_json(data) -> str:
    return json.dumps(_jsonable(data), sort_keys=True, indent=2)


def _parse_param(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadhjb", description="Quadratic Hamilton-Jacobi-Bellman laboratory.",
                                     epilog=PRESET_HELP)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML scenario file; explicit flags override it")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
        p.add_argument("--prefix", help="file name prefix for artifacts")
        p.add_argument("--param", action="append", type=_parse_param, default=[], metavar="KEY=VALUE",
                       help="extra preset or command parameter")

    def problem(p):
        p.add_argument("--preset", choices=list(PRESETS), help=PRESET_HELP)
        p.add_argument("--rho", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--h", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--dim", type=int)
        p.add_argument("--dx", type=float)
        p.add_argument("--L", type=float, help="half-width of the computational box")

    s = sub.add_parser("solve", help="solve a preset or inline problem on a grid", epilog=PRESET_HELP)
    common(s)
    problem(s)
    s.add_argument("--dt", type=float)
    s.add_argument("--cfl-safety", type=float)
    s.add_argument("--p-max", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--expect-blowup", dest="expect_blowup", action="store_true", default=None)
    s.add_argument("--no-blowup", dest="expect_blowup", action="store_false",
                   help="exit with code 3 if the solution blows up")

    r = sub.add_parser("riccati", help="scalar Riccati equation: closed form, RK4 and blow-up time")
    common(r)
    r.add_argument("--rho", type=float)
    r.add_argument("--T", type=float)
    r.add_argument("--dt", type=float)

    b = sub.add_parser("barrier", help="tabulate the heat barrier and report barrier constants")
    common(b)
    b.add_argument("--R", type=float)
    b.add_argument("--T", type=float)
    b.add_argument("--c-bar", type=float)
    b.add_argument("--nu", type=float)

    m = sub.add_parser("mc", help="Monte-Carlo cost estimate for a preset with an SDE", epilog=PRESET_HELP)
    common(m)
    problem(m)
    m.add_argument("--policy", choices=["auto", "optimal", "optimize", "zero"])
    m.add_argument("--n-paths", type=int)
    m.add_argument("--mc-dt", type=float)
    m.add_argument("--seed", type=int)
    m.add_argument("--truncation", type=float)
    m.add_argument("--moments", action="store_true", help="also run the second-moment audit")

    v = sub.add_parser("verify", help="run a named check suite")
    common(v)
    v.add_argument("--suite", choices=["all", *SUITES])
    return parser


def scenario_from_args(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config).to_dict() if args.config else {}
    cfg["command"] = args.command
    params = dict(cfg.get("params") or {})
    for key in ("rho", "T", "eps", "h", "sigma", "dim", "R", "c_bar", "nu"):
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    if args.command == "riccati" and args.dt is not None:
        params["dt"] = args.dt
    params.update(dict(args.param))
    cfg["params"] = params
    if getattr(args, "preset", None):
        cfg["preset"] = args.preset
        cfg["inline"] = None
    grid = dict(cfg.get("grid") or {})
    for key in ("dx", "L"):
        if getattr(args, key, None) is not None:
            grid[key] = getattr(args, key)
    cfg["grid"] = grid
    if args.command == "solve":
        scheme = dict(cfg.get("scheme") or {})
        for flag, key in (("dt", "dt"), ("cfl_safety", "cfl_safety"), ("p_max", "p_max"), ("theta", "theta")):
            if getattr(args, flag) is not None:
                scheme[key] = getattr(args, flag)
        cfg["scheme"] = scheme
        if args.expect_blowup is not None:
            cfg["expect_blowup"] = args.expect_blowup
    if args.command == "mc":
        mc = dict(cfg.get("mc") or {})
        for flag, key in (("n_paths", "n_paths"), ("mc_dt", "dt"), ("seed", "seed"), ("truncation", "truncation")):
            if getattr(args, flag) is not None:
                mc[key] = getattr(args, flag)
        cfg["mc"] = mc
        if args.policy is not None:
            cfg["policy"] = args.policy
    if args.command == "verify" and args.suite is not None:
        cfg["suite"] = args.suite
    output = dict(cfg.get("output") or {})
    if args.out:
        output["dir"] = args.out
    if args.prefix:
        output["prefix"] = args.prefix
    cfg["output"] = output
    return ScenarioConfig.from_dict(cfg)


def _out_dir(cfg: ScenarioConfig) -> Path:
    path = Path(cfg.output.get("dir") or os.environ.get(OUTPUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(cfg, stem, data):
    path = _out_dir(cfg) / f"{cfg.output.get('prefix') or stem}.json"
    text = dump_json(data)
    path.write_text(text + "\n")
    return path, text


# --- commands ------------------------------------------------------------------


def cmd_solve(cfg: ScenarioConfig):
    p = build_preset(cfg)
    field = solve(p.spec, p.grid, p.scheme)
    report = field.report()
    report.update({"preset": p.name, "params": p.params, "equation": p.equation})
    if p.exact is not None and not field.blew_up:
        report["max_rel_err"] = max_relative_error(field, p.exact, radius=min(2.0, min(p.grid.hi)))
    if p.notes.get("blowup_time") is not None:
        report["expected_blowup_time"] = p.notes["blowup_time"]
    stem = cfg.output.get("prefix") or p.name
    csv_path = _out_dir(cfg) / f"{stem}.csv"
    field.to_csv(csv_path)
    path, text = _write_json(cfg, stem, report)
    print(text)
    if field.blew_up and cfg.expect_blowup is False:
        logger.error("solution blew up at t=%s", field.blowup_time)
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_riccati(cfg: ScenarioConfig):
    params = riccati.ScalarLQParams(float(cfg.params.get("rho", 2.0)), float(cfg.params.get("T", 1.0)))
    dt = float(cfg.params.get("dt", 1e-5))
    traj = riccati.phi_rk4(params, dt)
    tau = riccati.blowup_time(params)
    report = {
        "rho": params.rho,
        "T": params.T,
        "dt": dt,
        "blowup_time": tau,
        "blew_up": traj.blew_up,
        "t_min": traj.t_min,
        "phi_rk4_first": float(traj.values[0]),
    }
    if tau is None:
        closed = riccati.phi_closed(params, traj.times)
        report["phi_closed_0"] = riccati.phi_closed(params, 0.0)
        report["max_abs_diff"] = float(np.max(np.abs(closed - traj.values)))
    _, text = _write_json(cfg, "riccati", report)
    print(text)
    return EXIT_OK


def cmd_barrier(cfg: ScenarioConfig):
    R = float(cfg.params.get("R", 10.0))
    T = float(cfg.params.get("T", 1.0))
    heat = barriers.HeatBarrierParams(R, T)
    rs = np.geomspace(float(cfg.params.get("r_min", 0.1 * R)), float(cfg.params.get("r_max", 10.0 * R)),
                      int(cfg.params.get("n_r", 41)))
    ts = np.linspace(0.0, T, int(cfg.params.get("n_t", 5)))
    rows = np.array([[r, t, heat(r, t)] for t in ts for r in rs])
    stem = cfg.output.get("prefix") or "barrier"
    np.savetxt(_out_dir(cfg) / f"{stem}.csv", rows, fmt="%.17g", delimiter=",", header="r,t,phi", comments="")
    constants = GrowthConstants(float(cfg.params.get("c_bar", 1.0)), float(cfg.params.get("nu", 1.0)),
                                float(cfg.params.get("c_hat", cfg.params.get("c_bar", 1.0))))
    sub, sup = barriers.quadratic_barrier_constants(constants)
    strict = barriers.strict_supersolution_constants(constants, horizon=T)
    report = {
        "heat": {"R": R, "T": T, "n_rows": len(rows)},
        "quadratic": {"K": sup.K, "rho": sup.rho, "tau": sup.tau},
        "strict_supersolution": {"C": strict.C, "L": strict.L, "M": strict.M, "eta": strict.eta, "mu": strict.mu,
                                 "ledger": {k: list(v) for k, v in strict.ledger().items()}},
    }
    _, text = _write_json(cfg, stem, report)
    print(text)
    return EXIT_OK


def cmd_mc(cfg: ScenarioConfig):
    p = build_preset(cfg)
    if p.sde is None:
        raise EstimationError(f"preset {p.name!r} has no stochastic control model")
    mcc = mc_config(cfg)
    x0 = [float(cfg.params.get("x0", p.x0))]
    choice = cfg.policy
    if choice == "auto":
        choice = "optimal" if p.optimal_policy is not None else "optimize"
    if choice == "optimal":
        if p.optimal_policy is None:
            raise EstimationError(f"preset {p.name!r} has no closed-form optimal policy")
        policy, est = p.optimal_policy, estimate_cost(p.sde, p.optimal_policy, x0, 0.0, mcc)
    elif choice == "optimize":
        policy, est = optimize_policy(p.sde, p.policy_family, x0, 0.0, mcc)
    else:
        policy = ConstantControl((0.0,))
        est = estimate_cost(p.sde, policy, x0, 0.0, mcc)
    report = {
        "preset": p.name,
        "params": p.params,
        "x0": x0,
        "t0": 0.0,
        "mc": {"n_paths": mcc.n_paths, "dt": mcc.dt, "seed": mcc.seed, "truncation": mcc.truncation},
        "policy": policy.describe() if hasattr(policy, "describe") else {"kind": choice},
        "estimate": est.to_dict(),
    }
    if p.riccati is not None and p.notes.get("blowup_time") is None:
        report["exact"] = float(riccati.lq_value(p.riccati, x0[0], 0.0))
    if cfg.params.get("moments") or cfg.output.get("moments"):
        report["moments"] = moment_check(p.sde, policy, x0, 0.0, mcc).to_dict()
    _, text = _write_json(cfg, f"{p.name}-mc", report)
    print(text)
    return EXIT_OK


def cmd_verify(cfg: ScenarioConfig):
    results = run_suite(cfg.suite)
    report = {"suite": cfg.suite, "passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]}
    _, text = _write_json(cfg, f"verify-{cfg.suite}", report)
    print(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


COMMAND_TABLE = {"solve": cmd_solve, "riccati": cmd_riccati, "barrier": cmd_barrier, "mc": cmd_mc, "verify": cmd_verify}


def run(cfg: ScenarioConfig) -> int:
    try:
        return COMMAND_TABLE[cfg.command](cfg)
    except (ValueError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "mc" and args.moments:
        args.param.append(("moments", True))
    try:
        cfg = scenario_from_args(args)
    except (ValueError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
