"""Solve the exported MILP with HiGHS and compare against the exact solver.

Needs the optional ``highspy`` package (``pip install -e .[milp]``).

    python scripts/crosscheck_highs.py C101_C5x base R104_C5 tw --station-copies 3
"""

import argparse
import tempfile
import time
from dataclasses import replace
from pathlib import Path

from evrp2e.exact import exact_solve
from evrp2e.instance import load_instance
from evrp2e.milp import build_model, highs_runner, import_solution, write_lp
from evrp2e.solution import evaluate

INSTANCES = Path(__file__).resolve().parent.parent / "instances"


def check(name: str, variant: str, sat_copies: int, sta_copies: int, limit: float) -> str:
    inst = replace(load_instance(INSTANCES / f"{name}.txt", variant),
                   satellite_copies=sat_copies, station_copies=sta_copies)
    model = build_model(inst)
    with tempfile.TemporaryDirectory() as tmp:
        lp, sol = Path(tmp) / "m.lp", Path(tmp) / "m.sol"
        write_lp(model, lp)
        t0 = time.monotonic()
        highs_runner(lp, sol, limit)
        elapsed = time.monotonic() - t0
        imported = evaluate(inst, import_solution(model, inst, sol)).objective
    ref, proof = exact_solve(inst)
    return (f"{name} {variant} highs={imported:.4f} exact={evaluate(inst, ref).objective:.4f} "
            f"{proof.value} {elapsed:.1f}s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("pairs", nargs="+", help="instance name and variant, repeated")
    ap.add_argument("--satellite-copies", type=int, default=1)
    ap.add_argument("--station-copies", type=int, default=3)
    ap.add_argument("--time-limit", type=float, default=300.0)
    args = ap.parse_args()
    if len(args.pairs) % 2:
        ap.error("give instance/variant pairs")
    for name, variant in zip(args.pairs[::2], args.pairs[1::2]):
        print(check(name, variant, args.satellite_copies, args.station_copies, args.time_limit))


if __name__ == "__main__":
    main()
