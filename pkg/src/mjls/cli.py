"""Command-line front end.

Every invocation prints exactly one JSON object on stdout and exits with

* 0 - success (stable / verified / written),
* 1 - usage, parse or validation error, or a violated premise,
* 2 - unstable system or failed sign condition,
* 3 - an iterative solver did not converge.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import ConvergenceError, MjlsError, PremiseError, SignConditionError
from .export import (write_energy_csv, write_field_csv, write_moments_csv,
                     write_trajectories_csv)
from .riccati import check_finite_brl, hinf_bisection, solve_are, verify_brl_infinite
from .simulate import (ChainSampler, empirical_second_moment, energy_ratio_curve,
                       second_moment_trace_stats, simulate_phi)
from .stability import analyze_stability

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_NOCONV = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("config", help="model config (JSON)")
    p.add_argument("--out", help="also write the JSON report to this file")
    p.add_argument("--grid-nodes", type=int, help="override node count of every component")
    p.add_argument("--quadrature", choices=["midpoint", "trapezoid"])
    p.add_argument("--dump-config", action="store_true",
                   help="print the normalized config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mjls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze-stability", help="spectral and Lyapunov stability tests")
    _common(p)
    p.add_argument("--tol", type=float, default=1e-10, help="power-iteration tolerance")

    p = sub.add_parser("solve-are", help="coupled algebraic Riccati equation and BRL check")
    _common(p)
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--horizon", type=int, help="also run the finite-horizon test")
    p.add_argument("--max-rounds", type=int, default=100000)
    p.add_argument("--fidelity-algorithm1", action="store_true",
                   help="recompute both horizons from zero every round")
    p.add_argument("--csv-dir", default=".", help="directory for K.csv")

    p = sub.add_parser("simulate", help="Monte Carlo trajectories, energies and moments")
    _common(p)
    p.add_argument("--traj", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--disturbance", help="zero | exp(rate) | impulse(k0) | file(path)")
    p.add_argument("--x0", help="comma-separated initial state")
    p.add_argument("--dt", type=float, help="time step used in the CSV time column")
    p.add_argument("--csv-dir", default=".")

    p = sub.add_parser("hinf-bound", help="bisection on the attenuation level")
    _common(p)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--eps", type=float)
    return parser


def _pick(args, defaults, name, cast=float, required=True):
    val = getattr(args, name, None)
    if val is None:
        val = defaults.get(name)
    if val is None:
        if required:
            raise UsageError(f"--{name.replace('_', '-')} is required (no config default)")
        return None
    return cast(val)


_DIST = re.compile(r"^\s*(zero|exp|impulse|file)\s*(?:\((.*)\))?\s*$")


def parse_disturbance(spec: str):
    """Turn a disturbance tag into a function of ``k`` or an array of values."""
    m = _DIST.match(spec or "")
    if not m:
        raise UsageError(f"unknown disturbance {spec!r}; use zero | exp(rate) | impulse(k0) | file(path)")
    kind, arg = m.group(1), m.group(2)
    if kind == "zero":
        return None
    if arg is None or not arg.strip():
        raise UsageError(f"disturbance {kind} needs an argument")
    if kind == "exp":
        rate = float(arg)
        return lambda k: math.exp(-rate * k)
    if kind == "impulse":
        k0 = int(arg)
        return lambda k: 1.0 if k == k0 else 0.0
    path = Path(arg.strip())
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise UsageError(f"disturbance file {path}: {exc.strerror}") from None


def _load(args):
    return cfgmod.load(args.config, grid_nodes=args.grid_nodes, quadrature=args.quadrature)


def _emit(payload, args):
    text = json.dumps(payload, indent=2, default=_json_default)
    if getattr(args, "out", None):
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def cmd_analyze_stability(args):
    cfg = _load(args)
    report = analyze_stability(cfg.system, tol=args.tol)
    payload = {"command": "analyze-stability", "model": cfg.name, "report": report.to_json_dict()}
    stable = bool(report.emss_c_verdict and report.emss_verdict)
    return payload, EXIT_OK if stable else EXIT_FAIL


def cmd_solve_are(args):
    cfg = _load(args)
    gamma = _pick(args, cfg.defaults, "gamma")
    eps = _pick(args, cfg.defaults, "eps", required=False) or 1e-5
    payload = {"command": "solve-are", "model": cfg.name, "gamma": gamma, "eps": eps}
    if args.horizon is not None:
        payload["finite_horizon"] = check_finite_brl(cfg.system, gamma, args.horizon).to_json_dict()
    try:
        sol = solve_are(cfg.system, gamma, eps, args.max_rounds, literal=args.fidelity_algorithm1)
    except SignConditionError as exc:
        payload.update(status="sign_condition_failed", message=str(exc),
                       node=exc.node, step=exc.step, indicates="gain not below gamma")
        return payload, EXIT_FAIL
    except ConvergenceError as exc:
        payload.update(status="not_converged", message=str(exc), report=exc.report)
        return payload, EXIT_NOCONV
    verdict = verify_brl_infinite(cfg.system, gamma, sol, eps=eps)
    csv_path = write_field_csv(sol.K, Path(args.csv_dir) / "K.csv")
    payload.update(status="verified" if verdict.feasible else "not_verified",
                   solution=sol.to_json_dict(), verdict=verdict.to_json_dict(), k_csv=csv_path)
    return payload, EXIT_OK if verdict.feasible else EXIT_FAIL


def cmd_simulate(args):
    cfg = _load(args)
    d = cfg.defaults
    system = cfg.system
    n_traj = _pick(args, d, "traj", int, False) or 100
    steps = _pick(args, d, "steps", int, False) or 100
    seed = _pick(args, d, "seed", int, False) or 0
    dt = _pick(args, d, "dt", float, False) or 1.0
    dist_tag = args.disturbance or d.get("disturbance", "zero")
    dist = parse_disturbance(dist_tag)
    if args.x0 is not None:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    else:
        x0 = np.array(d.get("x0", np.zeros(system.n)), dtype=float)
    if x0.shape != (system.n,):
        raise UsageError(f"--x0 needs {system.n} values")

    sampler = ChainSampler(system.kernel, seed)
    batch = simulate_phi(system, sampler, x0, dist, steps, n_traj, label=dist_tag)
    curve = energy_ratio_curve(batch)
    moments = empirical_second_moment(batch)
    mean_sq, se = second_moment_trace_stats(batch)
    out = Path(args.csv_dir)
    files = {
        "trajectories": write_trajectories_csv(batch, out / "trajectories.csv", dt),
        "energy": write_energy_csv(curve, out / "energy.csv", dt),
        "moments": write_moments_csv(moments, out / "moments.csv"),
    }
    ratios = curve.ratio[~np.isnan(curve.ratio)]
    payload = {
        "command": "simulate", "model": cfg.name, "n_traj": n_traj, "steps": steps,
        "seed": seed, "disturbance": dist_tag, "grid_interpolated": batch.grid_interpolated,
        "max_ratio": float(ratios.max()) if ratios.size else None,
        "final_mean_square": float(mean_sq[-1]), "final_mean_square_se": float(se[-1]),
        "files": files,
    }
    return payload, EXIT_OK


def cmd_hinf_bound(args):
    cfg = _load(args)
    d = cfg.defaults
    lo, hi = _pick(args, d, "lo"), _pick(args, d, "hi")
    tol = _pick(args, d, "tol", required=False) or 1e-3
    eps = _pick(args, d, "eps", required=False) or 1e-5
    lo_b, hi_b = hinf_bisection(cfg.system, lo, hi, tol, eps)
    return {"command": "hinf-bound", "model": cfg.name, "interval": [lo_b, hi_b],
            "tol": tol}, EXIT_OK


COMMANDS = {
    "analyze-stability": cmd_analyze_stability,
    "solve-are": cmd_solve_are,
    "simulate": cmd_simulate,
    "hinf-bound": cmd_hinf_bound,
}


def _thread_limit():
    cap = os.environ.get("MJLS_THREADS")
    if not cap:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(cap)))


def main(argv=None) -> int:
    args = None
    try:
        args = build_parser().parse_args(argv)
        with _thread_limit():
            if args.dump_config:
                payload, code = {"command": "dump-config", "config": _load(args).dump()}, EXIT_OK
            else:
                payload, code = COMMANDS[args.command](args)
    except (UsageError, PremiseError) as exc:
        payload, code = {"status": "error", "message": str(exc)}, EXIT_ERROR
    except SignConditionError as exc:
        payload, code = {"status": "sign_condition_failed", "message": str(exc)}, EXIT_FAIL
    except ConvergenceError as exc:
        payload, code = {"status": "not_converged", "message": str(exc)}, EXIT_NOCONV
    except MjlsError as exc:
        payload, code = {"status": "error", "message": str(exc)}, EXIT_ERROR
    payload.setdefault("exit_code", code)
    _emit(payload, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
