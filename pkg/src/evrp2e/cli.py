"""Command line entry point: ``evrp2e solve|validate|export|transform-pd``.

Exit codes: 0 success, 1 infeasible solution or failed run, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .instance import InstanceError, Variant, apply_pd_transform, load_instance, parse_instance, write_instance
from .solution import StructurallyInvalid, VariantMismatch, evaluate, read_solution

OK, FAILED, BAD_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _variant(text: str) -> Variant:
    try:
        return Variant(text.lower())
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown variant {text!r}") from None


def _rate(text: str) -> str:
    if text.lower() in ("equal", "random"):
        return text.lower()
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("rate must be an integer in [20, 50], 'equal' or 'random'") from None
    if not 20 <= value <= 50:
        raise argparse.ArgumentTypeError("rate must lie in [20, 50]")
    return str(value)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evrp2e", description="Two-echelon electric vehicle routing solvers")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run an algorithm over a set of instances")
    s.add_argument("--config", help="key = value file; flags given here win")
    s.add_argument("--variant", type=_variant)
    s.add_argument("--algo", choices=[a.value for a in bench.Algorithm])
    s.add_argument("--instances", help="glob of instance files")
    s.add_argument("--runs", type=int)
    s.add_argument("--time-limit", type=float, dest="time_limit")
    s.add_argument("--iterations", type=int, help="iteration budget instead of wall clock")
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--rate", type=_rate, dest="pd_rate", help="PD division rate")
    s.add_argument("--gap", action="store_true", default=None, help="report the gap to the exact optimum")
    s.add_argument("--solutions", dest="solutions_dir", help="directory for best solutions")
    s.add_argument("--out", help="report file; printed to stdout when omitted")
    s.add_argument("--format", choices=[f.value for f in bench.ReportFormat])

    v = sub.add_parser("validate", help="check a solution file against an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--solution", required=True)
    v.add_argument("--variant", type=_variant, default=Variant.BASE)
    v.add_argument("--rate", type=_rate, default="equal")
    v.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("export", help="write the MILP model as .lp or .mps")
    e.add_argument("--instance", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--variant", type=_variant, default=Variant.BASE)
    e.add_argument("--satellite-copies", type=int)
    e.add_argument("--station-copies", type=int)
    e.add_argument("--rate", type=_rate, default="equal")
    e.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("transform-pd", help="duplicate each customer into a delivery and a pickup point")
    t.add_argument("--instance", required=True)
    t.add_argument("--rate", type=_rate, default="equal")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    return p


def _load(path, variant, rate, seed, **kw):
    if not Path(path).is_file():
        raise InputError(f"no such file: {path}")
    pd = bench.pd_config(rate, seed) if variant is Variant.PD else None
    return load_instance(path, variant, pd, **kw)


def cmd_solve(args) -> int:
    values = bench.load_config(args.config) if args.config else {}
    fmt = args.format or values.get("format") or "csv"
    for key in ("variant", "algo", "instances", "runs", "time_limit", "iterations", "seed",
                "jobs", "pd_rate", "gap", "solutions_dir", "out"):
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag.value if isinstance(flag, Variant) else flag
    if not values.get("instances"):
        raise InputError("--instances is required (flag or config file)")
    try:
        spec = bench.spec_from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    try:
        rows = bench.run_benchmark(spec)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    text = bench.emit_report(rows, fmt, spec.output)
    if spec.output is None:
        sys.stdout.write(text)
    failed = [r for r in rows if r.dist is None and spec.algorithm is not bench.Algorithm.EXPORT_MILP]
    for r in failed:
        print(f"{r.instance}: {r.error}", file=sys.stderr)
    return FAILED if failed else OK


def cmd_validate(args) -> int:
    inst = _load(args.instance, args.variant, args.rate, args.seed)
    if not Path(args.solution).is_file():
        raise InputError(f"no such file: {args.solution}")
    try:
        sol = read_solution(args.solution)
        ev = evaluate(inst, sol)
    except (json.JSONDecodeError, KeyError, TypeError, StructurallyInvalid, VariantMismatch) as exc:
        raise InputError(f"unreadable solution: {exc}") from exc
    print(f"objective {ev.objective:.6f}")
    if ev.feasible:
        print("feasible")
        return OK
    for viol in ev.violations:
        print(f"violation {viol.kind} [{viol.family}] at {viol.where}: {viol.magnitude:g}")
    return FAILED


def cmd_export(args) -> int:
    from . import milp

    kw = {}
    if args.satellite_copies is not None:
        kw["satellite_copies"] = args.satellite_copies
    if args.station_copies is not None:
        kw["station_copies"] = args.station_copies
    inst = _load(args.instance, args.variant, args.rate, args.seed, **kw)
    model = milp.build_model(inst)
    out = Path(args.out)
    if out.suffix.lower() == ".mps":
        milp.write_mps(model, out)
    elif out.suffix.lower() == ".lp":
        milp.write_lp(model, out)
    else:
        raise InputError("output must end in .lp or .mps")
    print(f"{model.n_variables} variables, {model.n_constraints} constraints")
    return OK


def cmd_transform_pd(args) -> int:
    if not Path(args.instance).is_file():
        raise InputError(f"no such file: {args.instance}")
    inst = parse_instance(args.instance, Variant.PD)
    write_instance(apply_pd_transform(inst, bench.pd_config(args.rate, args.seed)), args.out)
    return OK


COMMANDS = {"solve": cmd_solve, "validate": cmd_validate, "export": cmd_export,
            "transform-pd": cmd_transform_pd}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return BAD_INPUT if exc.code else OK
    try:
        return COMMANDS[args.command](args)
    except (InputError, InstanceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
