"""Command-line front end.

Five subcommands: ``analyze`` (closed forms for one system), ``simulate``
(Monte Carlo replications), ``optimize-arrival`` and ``optimize-offset``
(the two optimization procedures), and ``sweep`` (grid evaluation driven
by a JSON spec file).  Exit codes: 0 success, 2 invalid input or an
unstable system, 3 a runtime numerical or simulation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from . import __version__, queue_core, report, sim
from .dist import ARRIVAL_GRAMMAR, ServiceModel, parse_arrival
from .errors import AudKitError, InputError
from .optimize import FAMILY_ARITY, bisection_optimal_arrival, optimize_offset
from .queue_core import (
    PeriodicOffsetDecisions,
    PeriodicSyncDecisions,
    PoissonDecisions,
    SystemConfig,
    average_aud_dm1d_offset,
    average_aud_dm1d_sync,
    average_aud_dm1m,
)

DECISION_GRAMMAR = "poisson:rate=<v> | sync:m0=<m> | offset:delta=<d>"


def parse_decision(text: str):
    head, sep, rest = text.partition(":")
    try:
        if head == "poisson" and sep:
            key, _, val = rest.partition("=")
            if key == "rate":
                return PoissonDecisions(rate=float(val))
        elif head == "sync" and sep:
            key, _, val = rest.partition("=")
            if key == "m0":
                m0 = float(val)
                if m0 != int(m0):
                    raise InputError(f"m0 must be an integer, got {val}")
                return PeriodicSyncDecisions(m0=int(m0))
        elif head == "offset" and sep:
            key, _, val = rest.partition("=")
            if key == "delta":
                return PeriodicOffsetDecisions(delta=float(val))
    except ValueError:
        raise InputError(f"non-numeric value in decision spec {text!r}") from None
    raise InputError(
        f"unknown decision spec {text!r}; expected one of: {DECISION_GRAMMAR}"
    )


def _threads(args) -> int:
    env = os.environ.get("AUDKIT_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"AUDKIT_THREADS must be an integer, got {env!r}") from None
    if args.threads is not None:
        return max(1, args.threads)
    return os.cpu_count() or 1


def _emit(payload: dict, lines, args) -> None:
    if args.json:
        text = json.dumps(payload, indent=2) + "\n"
    else:
        text = "".join(f"{k:<22} {v}\n" for k, v in lines)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _build_config(args) -> SystemConfig:
    arrival = parse_arrival(args.arrival)
    decision = parse_decision(args.decision)
    return SystemConfig(arrival, ServiceModel(rate=args.mu), decision)


def _cmd_analyze(args) -> int:
    config = _build_config(args)
    derived = queue_core.derive(config)
    aud = queue_core.mean_aud(config)
    pmis = queue_core.missing_probability(config)
    payload = {
        "command": "analyze",
        "config": config.describe(),
        "derived": derived.to_dict(),
        "mean_aud": aud,
        "missing_probability": pmis,
    }
    lines = [
        ("rho", f"{derived.rho:.12g}"),
        ("rho1", f"{derived.rho1:.12g}"),
        ("mean_system_time", f"{derived.mean_system_time:.12g}"),
        ("mean_interdeparture", f"{derived.mean_y:.12g}"),
        ("second_moment_y", f"{derived.second_moment_y:.12g}"),
        ("cross_ty", f"{derived.cross_ty:.12g}"),
        ("mean_aud", f"{aud:.12g}"),
        ("missing_probability", "n/a (no closed form)" if pmis is None else f"{pmis:.12g}"),
    ]
    _emit(payload, lines, args)
    return 0


def _cmd_simulate(args) -> int:
    config = _build_config(args)
    rep = sim.run_replications(
        config,
        horizon=args.horizon,
        n_reps=args.reps,
        base_seed=args.seed,
        threads=_threads(args),
    )
    if args.dump:
        records, decisions = sim.run_trajectory(config, args.horizon, args.seed)
        sim.dump_trajectory_csv(records, decisions, args.dump)
    payload = {"command": "simulate", "report": rep.to_dict()}
    lines = [
        ("mean_aud", f"{rep.mean_aud:.12g}"),
        ("aud_std_error", f"{rep.aud_std_error:.6g}"),
        ("ci95", f"[{rep.ci95[0]:.12g}, {rep.ci95[1]:.12g}]"),
        ("p_mis", f"{rep.p_mis_hat:.12g}"),
        ("p_mis_std_error", f"{rep.p_mis_std_error:.6g}"),
        ("p_short_interdep", "n/a" if rep.p_short_interdeparture is None
         else f"{rep.p_short_interdeparture:.12g}"),
        ("updates_used", rep.n_updates),
        ("decisions_used", rep.n_decisions),
        ("updates_discarded", rep.updates_discarded),
        ("decisions_discarded", rep.decisions_discarded),
        ("horizon", rep.horizon),
        ("replications", rep.n_replications),
        ("seed", rep.seed),
    ]
    _emit(payload, lines, args)
    return 0


def _cmd_optimize_arrival(args) -> int:
    if args.family not in FAMILY_ARITY:
        raise InputError(
            f"unknown family {args.family!r}; expected one of {sorted(FAMILY_ARITY)}"
        )
    eps = args.eps if args.eps is not None else 1e-6 / args.mu
    res = bisection_optimal_arrival(args.family, args.mu, eps=eps)
    payload = {
        "command": "optimize-arrival",
        "family": res.family,
        "mu": args.mu,
        "kappa": list(res.kappa),
        "c0": res.c0,
        "lambda_opt": res.arrival_rate(),
        "outer_iterations": res.outer_iterations,
        "inner_evaluations": res.inner_evaluations,
        "converged": res.converged,
        "bracket_width": res.bracket_width,
        "defaults": {"eps": eps, "n_starts": 3, "max_evals": 10000, "penalty": 1e9},
    }
    lines = [
        ("family", res.family),
        ("kappa_opt", "[" + ", ".join(f"{v:.10g}" for v in res.kappa) + "]"),
        ("min_aud (c0)", f"{res.c0:.12g}"),
        ("lambda_opt", f"{res.arrival_rate():.10g}"),
        ("outer_iterations", res.outer_iterations),
        ("inner_evaluations", res.inner_evaluations),
        ("converged", res.converged),
        ("bracket_width", f"{res.bracket_width:.3g}"),
        ("eps", f"{eps:.3g}"),
    ]
    if res.family == "fnorm":
        lines.insert(2, ("sigma_sq_opt", f"{res.kappa[1] ** 2:.6g}"))
        payload["sigma_sq_opt"] = res.kappa[1] ** 2
    _emit(payload, lines, args)
    return 0


def _cmd_optimize_offset(args) -> int:
    lam, mu = args.lam, args.mu
    eps = args.eps if args.eps is not None else 1e-9
    res = optimize_offset(lam, mu, eps=eps)
    aud_star = average_aud_dm1d_offset(lam, mu, res.delta)
    payload = {
        "command": "optimize-offset",
        "lambda": lam,
        "mu": mu,
        "delta_opt": res.delta,
        "u1_opt": res.u1,
        "phi_residual": res.phi_residual,
        "iterations": res.iterations,
        "aud_at_delta_opt": aud_star,
        "aud_poisson_decisions": average_aud_dm1m(lam, mu),
        "aud_sync_m0_1": average_aud_dm1d_sync(lam, mu, 1),
        "defaults": {"eps": eps, "max_iter": 100000},
    }
    lines = [
        ("delta_opt", f"{res.delta:.12g}"),
        ("u1_opt", f"{res.u1:.12g}"),
        ("phi_residual", f"{res.phi_residual:.3g}"),
        ("iterations", res.iterations),
        ("aud_at_delta_opt", f"{aud_star:.12g}"),
        ("aud_poisson_decisions", f"{average_aud_dm1m(lam, mu):.12g}"),
        ("aud_sync_m0_1", f"{average_aud_dm1d_sync(lam, mu, 1):.12g}"),
        ("eps", f"{eps:.3g}"),
    ]
    if args.delta_grid:
        import numpy as np

        grid = np.linspace(0.0, 1.0 / lam, args.delta_grid + 2)[1:-1]
        values = [average_aud_dm1d_offset(lam, mu, d) for d in grid]
        best = int(np.argmin(values))
        payload["delta_grid_min"] = {"delta": float(grid[best]), "aud": values[best]}
        lines.append(("delta_grid_min", f"{grid[best]:.12g} (aud {values[best]:.12g})"))
    _emit(payload, lines, args)
    return 0


def _load_sweep_spec(path: str) -> report.SweepSpec:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        template = SystemConfig(
            parse_arrival(raw["template"]["arrival"]),
            ServiceModel(rate=float(raw["template"]["mu"])),
            parse_decision(raw["template"]["decision"]),
        )
        return report.SweepSpec(
            variable=raw["variable"],
            grid=tuple(float(v) for v in raw["grid"]),
            template=template,
            evaluations=tuple(raw["evaluations"]),
            horizon=int(raw.get("horizon", 1_000_000)),
            replications=int(raw.get("replications", 5)),
            base_seed=int(raw.get("base_seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise InputError(f"bad sweep spec {path}: {err}") from None


def _cmd_sweep(args) -> int:
    spec = _load_sweep_spec(args.spec)
    rows = report.run_sweep(spec)
    fmt = "json" if args.json and args.format == "csv" else args.format
    if args.out:
        report.serialize(rows, fmt, args.out, variable=spec.variable, columns=spec.columns())
    else:
        report.serialize(rows, fmt, sys.stdout, variable=spec.variable, columns=spec.columns())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="audkit",
        description="Age-upon-decisions analysis of update-and-decide queueing systems.",
    )
    p.add_argument("--version", action="version", version=f"audkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--json", action="store_true", help="emit JSON instead of text")
        sp.add_argument("--out", help="write output to this path instead of stdout")

    sp = sub.add_parser("analyze", help="closed-form quantities for one system")
    sp.add_argument("--arrival", required=True, help=f"arrival spec: {ARRIVAL_GRAMMAR}")
    sp.add_argument("--mu", type=float, required=True, help="service rate")
    sp.add_argument("--decision", required=True, help=f"decision spec: {DECISION_GRAMMAR}")
    add_common(sp)
    sp.set_defaults(func=_cmd_analyze)

    sp = sub.add_parser("simulate", help="Monte Carlo estimate for one system")
    sp.add_argument("--arrival", required=True, help=f"arrival spec: {ARRIVAL_GRAMMAR}")
    sp.add_argument("--mu", type=float, required=True, help="service rate")
    sp.add_argument("--decision", required=True, help=f"decision spec: {DECISION_GRAMMAR}")
    sp.add_argument("--horizon", type=int, default=1_000_000, help="updates per replication")
    sp.add_argument("--reps", type=int, default=5, help="number of replications")
    sp.add_argument("--seed", type=int, default=0, help="base seed")
    sp.add_argument("--dump", help="write the per-update/per-decision CSV here")
    sp.add_argument("--threads", type=int, default=None, help="worker threads")
    add_common(sp)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("optimize-arrival", help="AuD-minimizing arrival parameters")
    sp.add_argument("--family", required=True, help="exp | uniform | lomax | fnorm")
    sp.add_argument("--mu", type=float, required=True, help="service rate")
    sp.add_argument("--eps", type=float, default=None, help="bisection tolerance")
    add_common(sp)
    sp.set_defaults(func=_cmd_optimize_arrival)

    sp = sub.add_parser("optimize-offset", help="AuD-minimizing decision offset")
    sp.add_argument("--lambda", dest="lam", type=float, required=True, help="arrival rate")
    sp.add_argument("--mu", type=float, required=True, help="service rate")
    sp.add_argument("--eps", type=float, default=None, help="derivative residual tolerance")
    sp.add_argument(
        "--delta-grid", type=int, default=0,
        help="also report the minimum over this many interior grid points",
    )
    add_common(sp)
    sp.set_defaults(func=_cmd_optimize_offset)

    sp = sub.add_parser("sweep", help="grid evaluation from a JSON spec file")
    sp.add_argument("--spec", required=True, help="path to the sweep spec JSON")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.add_argument("--threads", type=int, default=None, help="worker threads")
    add_common(sp)
    sp.set_defaults(func=_cmd_sweep)

    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except AudKitError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
