"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 solver or verification error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .cooperation import build_coop
from .errors import FedGameError, InvalidConfigError
from .spne import Deviation, analyze_deviations, optimal_spne, simulate_repeated
from .stage import solve_ne, verify_ne
from .sweep import (AXES, Scenario, SweepSpec, VerificationError, check_result, emit, metrics,
                    run_scenario)

log = logging.getLogger("fedgame")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="scenario JSON file (defaults to the 100-client reference setup)")
    p.add_argument("--n-clients", type=int, help="override the roster size")
    p.add_argument("--delta", type=float, help="common discount factor")
    p.add_argument("--grid-step", type=float, help="decrement of the SPNE level scan (samples)")
    p.add_argument("--tol", type=float, default=1e-9, help="root-finding residual tolerance")
    p.add_argument("--output", help="write results here instead of stdout")
    p.add_argument("--format", choices=("text", "csv", "json"), default=None)
    p.add_argument("--verify", action="store_true",
                   help="check the equilibrium and per-client cost dominance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedgame", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, text in (("solve-ne", "stage-game Nash equilibrium"),
                       ("coop", "cooperative profile at the maximal level"),
                       ("spne", "optimal subgame-perfect equilibrium")):
        _common(sub.add_parser(name, help=text))

    sim = sub.add_parser("simulate", help="discounted costs under grim trigger")
    _common(sim)
    sim.add_argument("--horizon", type=int, default=10, help="slots played explicitly")
    sim.add_argument("--deviator", type=int, help="1-based rank of the deviating client")
    sim.add_argument("--slot", type=int, default=0)
    sim.add_argument("--level", type=float,
                     help="deviation amount (defaults to the one-slot best deviation)")

    sw = sub.add_parser("sweep", help="metrics over a parameter range")
    _common(sw)
    sw.add_argument("--axis", choices=AXES)
    sw.add_argument("--from", dest="start", type=float)
    sw.add_argument("--to", dest="stop", type=float)
    sw.add_argument("--step", type=float, default=1.0)
    return parser


def load_scenario(args) -> Scenario:
    try:
        scn = Scenario.load(args.config) if args.config else Scenario()
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {exc.filename}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}")
    except (InvalidConfigError, KeyError) as exc:
        raise UsageError(f"invalid scenario: {exc}")
    updates = {}
    if args.n_clients is not None:
        updates["n_clients"] = args.n_clients
    if args.delta is not None:
        if not 0 <= args.delta < 1:
            raise UsageError(f"--delta must lie in [0, 1), got {args.delta}")
        updates["delta"] = args.delta
    if args.grid_step is not None:
        updates["grid_step"] = args.grid_step
    if getattr(args, "axis", None):
        if args.start is None or args.stop is None:
            raise UsageError("--axis needs --from and --to")
        try:
            updates["sweep"] = SweepSpec(args.axis, args.start, args.stop, args.step)
        except InvalidConfigError as exc:
            raise UsageError(str(exc))
    return replace(scn, **updates) if updates else scn


def _num(v):
    return format(float(v), ".10g")


def _vec(x):
    return "(" + ", ".join(v if isinstance(v, str) else _num(v) for v in x) + ")"


def _write(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _render(record: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(record, indent=2) + "\n"
    lines = []
    for key, value in record.items():
        if isinstance(value, list):
            value = _vec(value)
        elif isinstance(value, float):
            value = _num(value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def _verify_stage(eq, cfg):
    check = verify_ne(eq.profile, cfg)
    if not check.ok:
        raise VerificationError(f"client at position {check.violator} gains {check.worst_gain} by deviating")


def cmd_solve_ne(args, scn):
    cfg = scn.config()
    eq = solve_ne(cfg)
    if args.verify:
        _verify_stage(eq, cfg)
    return {
        "case": eq.tag,
        "unique": eq.unique,
        "x": eq.profile.x.tolist(),
        "roles": [r.value for r in eq.roles],
        "free_riders": eq.free_riders,
        "total": eq.profile.total(),
    }


def cmd_coop(args, scn):
    cfg = scn.config()
    eq = solve_ne(cfg)
    coop = build_coop(eq, cfg, tol=args.tol)
    if args.verify:
        check_result(cfg, eq, coop.profile)
    return {
        "case": eq.tag,
        "variant": coop.variant.value,
        "l": coop.l,
        "x_th": coop.x_th,
        "x_coop": coop.x_coop,
        "x": coop.profile.x.tolist(),
        "free_riders_ne": eq.free_riders,
        "free_riders_coop": int(np.count_nonzero(coop.profile.x == 0)),
        "note": coop.note,
    }


def cmd_spne(args, scn):
    cfg = scn.config()
    eq = solve_ne(cfg)
    coop = build_coop(eq, cfg, tol=args.tol)
    res = optimal_spne(eq, cfg, scn.delta, step=scn.grid_step, coop=coop)
    if args.verify:
        check_result(cfg, eq, res.profile)
    row = metrics(eq, res)
    return {
        "case": eq.tag,
        "delta": scn.delta,
        "l": res.l,
        "x_th": res.x_th,
        "x_cc": res.x_cc,
        "delta_th": res.delta_th,
        "feasible": res.feasible,
        "objective": res.objective,
        "total_ne": row.total_ne,
        "rd": row.rd,
        "free_riders_ne": row.fr_ne,
        "free_riders_spne": row.fr_spne,
        "nf": row.nf,
        "x": res.profile.x.tolist(),
    }


def cmd_simulate(args, scn):
    cfg = scn.config()
    eq = solve_ne(cfg)
    res = optimal_spne(eq, cfg, scn.delta, step=scn.grid_step)
    deviation = None
    if args.deviator is not None:
        n = args.deviator - 1
        if not 0 <= n < cfg.n_clients:
            raise UsageError(f"--deviator must lie in 1..{cfg.n_clients}")
        level = args.level
        if level is None:
            level = float(analyze_deviations(res.profile, eq, cfg).x_least[n])
        deviation = Deviation(n, args.slot, level)
    coop_cost = simulate_repeated(cfg, res.profile, eq, scn.delta, args.horizon)
    record = {"case": eq.tag, "delta": scn.delta, "feasible": res.feasible,
              "cooperate": coop_cost.tolist()}
    if deviation is not None:
        dev_cost = simulate_repeated(cfg, res.profile, eq, scn.delta, args.horizon, deviation)
        record.update(deviator=args.deviator, level=deviation.level, slot=deviation.slot,
                      deviate=dev_cost.tolist(),
                      deviation_pays=bool(dev_cost[deviation.client] < coop_cost[deviation.client]))
    return record


def cmd_sweep(args, scn):
    if scn.sweep is None:
        raise UsageError("sweep needs --axis/--from/--to or a sweep block in the config")
    rows = run_scenario(scn, verify=args.verify)
    fmt = args.format if args.format in ("csv", "json") else "csv"
    emit(rows, fmt, args.output,
         metadata={"seed": scn.seed, "scenario": scn.to_dict()} if args.output else None)
    failed = [r for r in rows if r.error]
    for r in failed:
        log.error("%s=%s: %s", r.axis, r.value, r.error)
    return 2 if failed else 0


COMMANDS = {"solve-ne": cmd_solve_ne, "coop": cmd_coop, "spne": cmd_spne,
            "simulate": cmd_simulate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scn = load_scenario(args)
        out = COMMANDS[args.command](args, scn)
    except (UsageError, InvalidConfigError) as exc:
        print(f"fedgame: error: {exc}", file=sys.stderr)
        return 1
    except FedGameError as exc:
        print(f"fedgame: solver error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"fedgame: error: {exc}", file=sys.stderr)
        return 1
    if isinstance(out, int):
        return out
    _write(_render(out, args.format or "text"), args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
