"""Experiment harness: run an algorithm over an instance glob and tabulate results.

Rows follow the usual table layout of the benchmark literature: best
objective (Dist), mean over runs (Avg), mean time to the best solution of a
run, and optionally the gap to a proven optimum from the exact solver.
"""

from __future__ import annotations

import csv
import glob
import io
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from enum import Enum
from pathlib import Path

from .cmsa import CmsaConfig, cmsa_solve
from .construct import ConstructConfig, ConstructionFailed, construct
from .exact import InstanceTooLarge, NoFeasibleSolution, Proof, exact_solve
from .instance import InstanceError, PdTransformConfig, Variant, load_instance
from .solution import Solution, evaluate, write_solution
from .vns import Flavor, VnsConfig, vns_solve

SMALL_LIMIT = 150.0
LARGE_LIMIT = 900.0
LARGE_CUSTOMERS = 30


class Algorithm(str, Enum):
    SAVINGS = "savings"
    INSERTION = "insertion"
    VNS_RED = "vns_red"
    VNS_FULL = "vns_full"
    CMSA = "cmsa"
    EXACT = "exact"
    EXPORT_MILP = "export_milp"


class ReportFormat(str, Enum):
    CSV = "csv"
    MARKDOWN = "md"


@dataclass(frozen=True)
class RunSpec:
    instances: str
    variant: Variant = Variant.BASE
    algorithm: Algorithm = Algorithm.SAVINGS
    runs: int = 10
    # None picks 150 s for small and 900 s for large instances
    time_limit: float | None = None
    seed: int = 0
    output: str | None = None
    jobs: int = 1
    # iteration budget for VNS/CMSA; makes runs reproducible
    iterations: int | None = None
    gap: bool = False
    solutions_dir: str | None = None
    pd_rate: str = "equal"

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")

    def limit_for(self, n_customers: int) -> float:
        if self.time_limit is not None:
            return self.time_limit
        return LARGE_LIMIT if n_customers > LARGE_CUSTOMERS else SMALL_LIMIT


@dataclass(frozen=True)
class ResultRow:
    instance: str
    dist: float | None = None
    avg: float | None = None
    time_to_best: float | None = None
    gap: float | None = None
    runs_ok: int = 0
    error: str = ""


COLUMNS = [f.name for f in fields(ResultRow)]


def gap_pct(dist: float, bound: float) -> float:
    if bound == 0:
        return 0.0 if dist == 0 else math.inf
    return 100.0 * (dist - bound) / bound


def pd_config(rate: str, seed: int = 0) -> PdTransformConfig:
    if str(rate).lower() in ("equal", "random"):
        return PdTransformConfig(str(rate).lower(), seed)
    return PdTransformConfig(int(rate), seed)


def _load(path: str, spec: RunSpec):
    pd = pd_config(spec.pd_rate, spec.seed) if spec.variant is Variant.PD else None
    return load_instance(path, spec.variant, pd)


def _one_run(inst, spec: RunSpec, seed: int) -> tuple[Solution, float]:
    """(solution, time to best) of a single run."""
    t0 = time.monotonic()
    algo = spec.algorithm
    limit = spec.limit_for(inst.n_customers)
    if algo in (Algorithm.SAVINGS, Algorithm.INSERTION):
        sol = construct(inst, ConstructConfig(heuristic=algo.value, rng_seed=seed))
        return sol, time.monotonic() - t0
    if algo in (Algorithm.VNS_RED, Algorithm.VNS_FULL):
        init = construct(inst, ConstructConfig(determinism_rate=1.0))
        flavor = Flavor.RED if algo is Algorithm.VNS_RED else Flavor.FULL
        sol, trace = vns_solve(inst, init, VnsConfig(flavor=flavor, time_limit=limit, rng_seed=seed,
                                                     max_iterations=spec.iterations))
        ttb = trace[-1][0] if spec.iterations is None else time.monotonic() - t0
        return sol, float(ttb)
    if algo is Algorithm.CMSA:
        cfg = CmsaConfig(total_time_limit=limit, rng_seed=seed,
                         construct_cfg=ConstructConfig(rng_seed=seed * 100_003),
                         max_iterations=spec.iterations)
        sol, _ = cmsa_solve(inst, cfg)
        return sol, cmsa_solve.last_stats.time_to_best
    if algo is Algorithm.EXACT:
        sol, _ = exact_solve(inst, budget=limit)
        return sol, time.monotonic() - t0
    raise ValueError(f"algorithm {algo.value} produces no solution")


def _instance_name(path: str) -> str:
    return Path(path).stem


def run_instance(path: str, spec: RunSpec) -> ResultRow:
    """All runs of one instance; failures end up in the row's error field."""
    name = _instance_name(path)
    try:
        inst = _load(path, spec)
    except (InstanceError, OSError) as exc:
        return ResultRow(name, error=f"load: {exc}")
    if spec.algorithm is Algorithm.EXPORT_MILP:
        from .milp import build_model, write_lp

        out_dir = Path(spec.output).parent if spec.output else Path(".")
        model = build_model(inst)
        write_lp(model, out_dir / f"{name}.lp")
        return ResultRow(name, runs_ok=1, error=f"{model.n_variables} vars, {model.n_constraints} rows")
    values, times, errors = [], [], []
    best: tuple[float, Solution] | None = None
    # the exact solver is deterministic; one run stands for all
    runs = 1 if spec.algorithm is Algorithm.EXACT else spec.runs
    for r in range(runs):
        try:
            sol, ttb = _one_run(inst, spec, spec.seed + r)
        except (ConstructionFailed, InstanceTooLarge, NoFeasibleSolution, ValueError) as exc:
            errors.append(f"{type(exc).__name__}: {exc}")
            continue
        ev = evaluate(inst, sol)
        if not ev.feasible:
            errors.append(f"infeasible result: {ev.violations[:2]}")
            continue
        values.append(ev.objective)
        times.append(ttb)
        if best is None or ev.objective < best[0]:
            best = (ev.objective, sol)
    if best is None:
        return ResultRow(name, error="; ".join(errors[:2]) or "no run succeeded")
    gap = None
    if spec.gap:
        try:
            ref, proof = exact_solve(inst, budget=spec.limit_for(inst.n_customers))
            if proof is Proof.OPTIMAL:
                gap = round(gap_pct(best[0], evaluate(inst, ref).objective), 6)
        except (InstanceTooLarge, NoFeasibleSolution):
            pass
    if spec.solutions_dir:
        Path(spec.solutions_dir).mkdir(parents=True, exist_ok=True)
        write_solution(best[1], Path(spec.solutions_dir) / f"{name}.{spec.variant.value}.json", name)
    return ResultRow(name, round(best[0], 6), round(statistics.fmean(values), 6),
                     round(statistics.fmean(times), 3), gap, len(values), "; ".join(errors[:2]))


def _worker(args):
    path, spec = args
    return run_instance(path, spec)


def run_benchmark(spec: RunSpec) -> list[ResultRow]:
    """Rows sorted by instance name; instances are spread over ``spec.jobs`` workers."""
    paths = sorted(glob.glob(spec.instances))
    if not paths:
        raise FileNotFoundError(f"no instance matches {spec.instances!r}")
    if spec.jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            rows = list(pool.map(_worker, [(p, spec) for p in paths]))
    else:
        rows = [run_instance(p, spec) for p in paths]
    return sorted(rows, key=lambda r: r.instance)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.2f}" if math.isfinite(v) else str(v)
    return str(v)


def render_report(rows: list[ResultRow], fmt: ReportFormat | str = ReportFormat.CSV) -> str:
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.CSV:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow(["" if getattr(r, c) is None else getattr(r, c) for c in COLUMNS])
        return buf.getvalue()
    head = ["Instance", "Dist", "Avg", "t(s)", "Gap(%)"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        lines.append("| " + " | ".join([r.instance, _fmt(r.dist), _fmt(r.avg),
                                          _fmt(r.time_to_best), _fmt(r.gap)]) + " |")
    done = [r for r in rows if r.dist is not None]
    if done:
        def mean(attr):
            vals = [getattr(r, attr) for r in done if getattr(r, attr) is not None]
            return statistics.fmean(vals) if vals else None
        lines.append("| Average | " + " | ".join(_fmt(mean(a)) for a in
                                                  ("dist", "avg", "time_to_best", "gap")) + " |")
    return "\n".join(lines) + "\n"


def emit_report(rows: list[ResultRow], fmt: ReportFormat | str = ReportFormat.CSV,
                path: str | Path | None = None) -> str:
    text = render_report(rows, fmt)
    if path is not None:
        Path(path).write_text(text)
    return text


# --- config files -------------------------------------------------------------------

_KEYS = {f.name for f in fields(RunSpec)} | {"format", "algo", "time-limit", "out"}


def load_config(path: str | Path) -> dict[str, str]:
    """``key = value`` lines, ``#`` comments; keys mirror the CLI flags."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        value = value.strip('"').strip("'")
        if key not in {k.replace("-", "_") for k in _KEYS}:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def spec_from_mapping(values: dict) -> RunSpec:
    """RunSpec from config-file style strings (aliases ``algo``, ``out``)."""
    v = dict(values)
    if "algo" in v:
        v["algorithm"] = v.pop("algo")
    if "out" in v:
        v["output"] = v.pop("out")
    v.pop("format", None)
    conv = {"runs": int, "seed": int, "jobs": int, "iterations": int, "time_limit": float}
    for key, fn in conv.items():
        if v.get(key) not in (None, ""):
            v[key] = fn(v[key])
        else:
            v.pop(key, None)
    if "gap" in v and isinstance(v["gap"], str):
        v["gap"] = v["gap"].lower() in ("1", "true", "yes", "on")
    return RunSpec(**v)


def with_overrides(spec: RunSpec, **kw) -> RunSpec:
    return replace(spec, **{k: val for k, val in kw.items() if val is not None})
