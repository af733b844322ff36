"""Command-line front end: dispatches computations, writes CSV/JSON artifacts.

Every subcommand accepts flags, an optional JSON config file (flags win),
and ``--dry-run`` to validate and show the resolved plan.  Exit codes:
0 success, 2 configuration error, 3 numerical failure.  Output text is
locale-independent with 17 significant digits so artifacts are
byte-stable for identical configurations and seeds.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import meanfield as mf
from . import prize as pz
from . import simulate as sim
from . import static_model as sm
from . import dynamic_model as dm
from .errors import (AttritionError, DegenerateRates, DomainError, InvalidCdf,
                     InvalidParameter, MismatchedAtZero, NonMonotonePrize,
                     NumericalInstability, SingularDerivative, StepTooLarge,
                     TailNotConverged)

COMMANDS = ("dynamic-moments", "dynamic-matrix", "dynamic-duration",
            "static-solve", "q-functional", "invasion-sweep", "meanfield",
            "perturbation", "simulate-dynamic", "simulate-static",
            "theorem2", "rate-fit")

_CONFIG_ERRORS = (InvalidParameter, NonMonotonePrize, DomainError, InvalidCdf,
                  MismatchedAtZero)
_NUMERICAL_ERRORS = (StepTooLarge, TailNotConverged, NumericalInstability,
                     DegenerateRates, SingularDerivative)

DEFAULTS = {
    "prize": "power", "alpha": 1.0, "coefficients": None, "knots": None,
    "n": 10, "n_list": None, "grid": None, "tau_grid": None, "t": 0.5,
    "step": None, "tail_tol": 1e-12, "seed": 0, "replicates": 1000,
    "delta": 0.1, "q": 0.5, "epsilon": 0.1, "rate": 1.0, "phi": None,
    "alpha_range": None, "n_range": None, "out": "-", "format": "csv",
    "dry_run": False,
}


# ---------------------------------------------------------------------------
# parsing helpers


def _parse_int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 2:
            raise InvalidParameter(f"integer range must be lo:hi, got {text!r}")
        lo, hi = int(parts[0]), int(parts[1])
        if hi < lo:
            raise InvalidParameter(f"empty integer range {text!r}")
        return list(range(lo, hi + 1))
    return [int(v) for v in text.split(",") if v != ""]


def _parse_float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidParameter(f"float range must be lo:hi:step, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise InvalidParameter(f"bad float range {text!r}")
        count = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 12) for i in range(count)]
    return [float(v) for v in text.split(",") if v != ""]


def _parse_grid(text):
    if text is None:
        return None
    parts = str(text).split(":")
    if len(parts) != 3:
        raise InvalidParameter(f"grid must be tmin:tmax:points, got {text!r}")
    lo, hi, pts = float(parts[0]), float(parts[1]), int(parts[2])
    if pts < 2 or hi <= lo:
        raise InvalidParameter(f"bad grid {text!r}")
    return np.linspace(lo, hi, pts)


def _prize_from_opts(opts) -> pz.PrizeSpec:
    kind = opts["prize"]
    n = int(opts["n"])
    if kind == "power":
        return pz.make_prize("power", n, alpha=float(opts["alpha"]))
    if kind == "polynomial":
        coeffs = opts.get("coefficients")
        if coeffs is None:
            raise InvalidParameter("polynomial prize needs --coefficients")
        if isinstance(coeffs, str):
            coeffs = [float(c) for c in coeffs.split(",")]
        return pz.make_prize("polynomial", n, coefficients=coeffs)
    if kind == "table":
        knots = opts.get("knots")
        if knots is None:
            raise InvalidParameter("table prize needs --knots")
        if isinstance(knots, str):
            knots = [[float(v) for v in pair.split(",")] for pair in knots.split(";")]
        return pz.make_prize("table", n, knots=knots)
    raise InvalidParameter(f"unknown prize kind {kind!r}")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_rows(opts, header, rows, meta=None):
    """Emit CSV (default) or JSON to --out; '-' writes to stdout."""
    meta = meta or {}
    if opts["format"] == "json":
        payload = {"meta": meta, "columns": header.split(","),
                   "rows": [[(v if isinstance(v, str) else float(v)) for v in row]
                            for row in rows]}
        text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    else:
        lines = [f"# {k}={_fmt(v)}" for k, v in sorted(meta.items())]
        if header:
            lines.append(header)
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        text = "\n".join(lines) + "\n"
    if opts["out"] == "-":
        sys.stdout.write(text)
    else:
        with open(opts["out"], "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_dynamic_moments(opts):
    spec = _prize_from_opts(opts)
    grid = _parse_grid(opts["grid"])
    if grid is None:
        grid = np.linspace(0.0, 1.25 * spec.v_max, 201)
    rates = dm.ess_rates(spec)
    probs = dm.state_probs_grid(rates, grid)
    x = np.arange(spec.N) / spec.N
    ex = probs @ x
    var = probs @ (x * x) - ex ** 2
    header = "t,E_X,Var_X," + ",".join(f"p_{i}" for i in range(1, spec.N + 1))
    rows = [[t, e, v, *p] for t, e, v, p in zip(grid, ex, np.maximum(var, 0.0), probs)]
    _write_rows(opts, header, rows)
    return 0


def _cmd_dynamic_matrix(opts):
    spec = _prize_from_opts(opts)
    mat = dm.transition_matrix(dm.ess_rates(spec), float(opts["t"]))
    _write_rows(opts, "", [list(row) for row in mat.entries])
    return 0


def _cmd_dynamic_duration(opts):
    n_values = _parse_int_list(opts["n_list"]) if opts.get("n_list") else [int(opts["n"])]
    rows = []
    for n in n_values:
        spec = _prize_from_opts({**opts, "n": n})
        rows.append([n, dm.expected_duration(spec), spec.v_max - pz.eval_prize(spec, 0.0)])
    _write_rows(opts, "N,T_N,limit", rows)
    return 0


def _solve_curve(opts, spec):
    step = float(opts["step"]) if opts.get("step") is not None else None
    return sm.solve_ess_ode(spec, step=step, tail_tol=float(opts["tail_tol"]))


def _cmd_static_solve(opts):
    spec = _prize_from_opts(opts)
    curve = _solve_curve(opts, spec)
    q_vals, _, _ = sm.ess_certificate(curve)
    rows = list(zip(curve.grid, curve.cdf, curve.density, q_vals))
    _write_rows(opts, "t,G,g,Q", rows)
    return 0


def _cmd_q_functional(opts):
    spec = _prize_from_opts(opts)
    curve = _solve_curve(opts, spec)
    q_vals, q_min, argmin = sm.ess_certificate(curve)
    _write_rows(opts, "t,Q", list(zip(curve.grid, q_vals)))
    print(f"min_Q={_fmt(q_min)} argmin_t={_fmt(argmin)}")
    return 0


def _sweep_cell(args):
    alpha, n, step, tail_tol = args
    spec = pz.make_prize("power", n, alpha=alpha)
    curve = sm.solve_ess_ode(spec, step=step, tail_tol=tail_tol)
    rep = sm.invasion_gap(curve)
    return [n, alpha, rep.delta, rep.a_part, rep.c_part, rep.method]


def _cmd_invasion_sweep(opts):
    alphas = _parse_float_list(opts["alpha_range"]) if opts.get("alpha_range") \
        else [float(opts["alpha"])]
    ns = _parse_int_list(opts["n_range"]) if opts.get("n_range") else [int(opts["n"])]
    step = float(opts["step"]) if opts.get("step") is not None else None
    cells = [(a, n, step, float(opts["tail_tol"])) for a in sorted(alphas) for n in sorted(ns)]
    workers = int(os.environ.get("ATTRITION_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    _write_rows(opts, "N,alpha,delta,A_N,C_N,method", rows)
    return 0


def _cmd_meanfield(opts):
    spec = _prize_from_opts(opts)
    grid = _parse_grid(opts["grid"])
    if grid is None:
        grid = np.linspace(0.0, spec.v_max, 1001)
    inner = grid[(grid > 0) & (grid < spec.v_max)]
    tau_grid = _parse_grid(opts.get("tau_grid")) if opts.get("tau_grid") else None
    if tau_grid is None:
        states = [mf.quit_fraction(spec, t) for t in inner]
        rows = [[s.t, s.q, s.qdot] for s in states]
        _write_rows(opts, "t,q,qdot", rows)
    else:
        rows = []
        for t in inner:
            m = mf.remaining_density(spec, t, tau_grid)
            rows.extend([t, tau, mv] for tau, mv in zip(tau_grid, m))
        _write_rows(opts, "t,tau,m", rows)
    return 0


def _cmd_perturbation(opts):
    spec = _prize_from_opts(opts)
    phis = opts.get("phi") or ["pow:0.5", "pow:2", "pow:3"]
    if isinstance(phis, str):
        phis = [phis]
    rows = []
    for label in phis:
        kind, _, param = str(label).partition(":")
        if kind != "pow" or not param:
            raise InvalidParameter(f"unknown test cdf {label!r} (use pow:BETA)")
        value = mf.ess_perturbation(spec, mf.warped_quit_cdf(spec, float(param)))
        rows.append([label, value])
    _write_rows(opts, "phi,value", rows)
    return 0


def _cmd_simulate_dynamic(opts):
    spec = _prize_from_opts(opts)
    grid = _parse_grid(opts["grid"])
    run = sim.simulate_dynamic_game(spec, int(opts["seed"]), int(opts["replicates"]),
                                    t_grid=grid)
    o = run.outputs
    rows = list(zip(o["t"], o["emp_E_X"], o["emp_Var_X"], o["ci"]))
    _write_rows(opts, "t,emp_E_X,emp_Var_X,ci", rows,
                meta={"seed": run.seed, "replicates": run.replicates})
    return 0


def _cmd_simulate_static(opts):
    spec = _prize_from_opts(opts)
    curve = _solve_curve(opts, spec)
    run = sim.sample_static_game(curve, int(opts["seed"]), int(opts["replicates"]))
    o = run.outputs
    rows = [[k + 1, o["rank_mean_payoff"][k], o["rank_ci"][k]] for k in range(spec.N)]
    _write_rows(opts, "rank,mean_payoff,ci", rows,
                meta={"seed": run.seed, "replicates": run.replicates})
    print(f"mean_payoff={_fmt(o['mean_payoff'])} ci={_fmt(o['mean_payoff_ci'])}")
    return 0


def _cmd_theorem2(opts):
    rate = float(opts["rate"])
    fam_a = sim.ExponentialStrategy(rate)
    fam_b = sim.HalfNormalStrategy.matched_to_exponential(rate)
    ns = _parse_int_list(opts["n_list"]) if opts.get("n_list") else [50, 200, 800]
    res = sim.indistinguishability_experiment(fam_a, fam_b, float(opts["q"]), ns,
                                              float(opts["delta"]), int(opts["seed"]),
                                              int(opts["replicates"]))
    rows = list(zip(res.n_values, res.exceedance, res.ci_lo, res.ci_hi))
    _write_rows(opts, "N,exceedance,ci_lo,ci_hi", rows,
                meta={"seed": res.seed, "replicates": res.replicates,
                      "q": res.q, "delta": res.delta})
    return 0


def _cmd_rate_fit(opts):
    ns = _parse_int_list(opts["n_list"]) if opts.get("n_list") else [20, 40, 80, 160, 320]
    step = float(opts["step"]) if opts.get("step") is not None else None
    fit = sm.invasion_rate_fit(float(opts["alpha"]), ns, step=step,
                               tail_tol=float(opts["tail_tol"]))
    rows = list(zip(fit.n_values, fit.a_values, fit.c_values))
    _write_rows(opts, "N,A_N,C_N", rows)
    print(f"slope_A={_fmt(fit.slope_a)} slope_C={_fmt(fit.slope_c)}")
    return 0


_HANDLERS = {
    "dynamic-moments": _cmd_dynamic_moments,
    "dynamic-matrix": _cmd_dynamic_matrix,
    "dynamic-duration": _cmd_dynamic_duration,
    "static-solve": _cmd_static_solve,
    "q-functional": _cmd_q_functional,
    "invasion-sweep": _cmd_invasion_sweep,
    "meanfield": _cmd_meanfield,
    "perturbation": _cmd_perturbation,
    "simulate-dynamic": _cmd_simulate_dynamic,
    "simulate-static": _cmd_simulate_static,
    "theorem2": _cmd_theorem2,
    "rate-fit": _cmd_rate_fit,
}


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attrition",
                                     description="N-player war-of-attrition laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        p.add_argument("--prize", choices=("power", "polynomial", "table"))
        p.add_argument("--alpha", type=float)
        p.add_argument("--coefficients")
        p.add_argument("--knots")
        p.add_argument("--n", type=int)
        p.add_argument("--n-list", dest="n_list")
        p.add_argument("--grid")
        p.add_argument("--tau-grid", dest="tau_grid")
        p.add_argument("--t", type=float)
        p.add_argument("--step", type=float)
        p.add_argument("--tail-tol", dest="tail_tol", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--delta", type=float)
        p.add_argument("--q", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--rate", type=float)
        p.add_argument("--phi", action="append")
        p.add_argument("--alpha-range", dest="alpha_range")
        p.add_argument("--n-range", dest="n_range")
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--config")
        p.add_argument("--dry-run", dest="dry_run", action="store_true")
    return parser


def _resolve_options(args: argparse.Namespace) -> dict:
    provided = {k: v for k, v in vars(args).items() if k != "command"}
    opts = dict(DEFAULTS)
    config_path = provided.pop("config", None)
    if config_path:
        with open(config_path) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise InvalidParameter("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise InvalidParameter(f"unknown config keys: {sorted(unknown)}")
        opts.update(loaded)
    opts.update(provided)
    return opts


def _validate(opts):
    if int(opts["n"]) < 2:
        raise InvalidParameter("n must be >= 2")
    if opts["step"] is not None and float(opts["step"]) <= 0:
        raise InvalidParameter("step must be positive")
    if not 0 < float(opts["tail_tol"]) < 1:
        raise InvalidParameter("tail-tol must lie in (0, 1)")
    if int(opts["replicates"]) < 1:
        raise InvalidParameter("replicates must be >= 1")
    if float(opts["delta"]) <= 0:
        raise InvalidParameter("delta must be positive")
    if not 0 < float(opts["q"]) <= 1:
        raise InvalidParameter("q must lie in (0, 1]")
    if not 0 < float(opts["epsilon"]) < 1:
        raise InvalidParameter("epsilon must lie in (0, 1)")


def run(argv) -> int:
    """Parse argv, dispatch one subcommand, return the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        opts = _resolve_options(args)
        _validate(opts)
        if opts["dry_run"]:
            plan = {k: v for k, v in sorted(opts.items()) if k != "dry_run"}
            print(json.dumps({"command": args.command, "resolved": plan},
                             sort_keys=True, default=str))
            return 0
        return _HANDLERS[args.command](opts)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (json.JSONDecodeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
