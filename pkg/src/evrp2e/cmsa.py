"""Construct, merge, solve, adapt.

Each iteration builds a few probabilistic constructions, merges their
components (truck arcs, EV arcs between consecutive non-station stops, and
customer-satellite assignments) into an aged pool, solves the problem
restricted to the pool and ages out components the restricted solution did
not use.

Construction seeds run ``construct_cfg.rng_seed, +1, ...`` across the whole
run, so the constructions seen by CMSA are exactly those of
:func:`construct.best_of` with the same total count; the result can never be
worse than that.
"""

from __future__ import annotations

import math
import random
import tempfile
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, NamedTuple

from .construct import ConstructConfig, ConstructionFailed, construct
from .exact import InstanceTooLarge, NoFeasibleSolution, exact_solve
from .instance import Instance, NodeRole
from .routing import EPS, Ctx, build_trucks, from_solution, to_solution
from .solution import Solution, evaluate
from .vns import Search, VnsConfig, run_vns


class Subsolver(str, Enum):
    VNS_INNER = "vns_inner"
    EXACT_ORACLE = "exact_oracle"
    EXTERNAL_MILP = "external_milp"


class Component(NamedTuple):
    kind: str  # arc1, arc2, assign
    a: str
    b: str


class TimeSliceExceeded(RuntimeError):
    pass


# (lp path, solution path, time limit) -> None; writes ``name value`` lines
MilpRunner = Callable[[Path, Path, float], None]


@dataclass(frozen=True)
class CmsaConfig:
    n_constructions_per_iter: int = 5
    age_max: int = 3
    total_time_limit: float = 150.0
    # defaults to a tenth of the total budget
    solver_time_slice: float | None = None
    construct_cfg: ConstructConfig = field(default_factory=ConstructConfig)
    subsolver: Subsolver = Subsolver.VNS_INNER
    rng_seed: int = 0
    # iteration budget; when set, the wall clock is ignored
    max_iterations: int | None = None
    inner_iterations: int = 30
    # first-improvement descent on every construction before merging
    improve_constructions: bool = True
    milp_runner: MilpRunner | None = None

    def __post_init__(self):
        object.__setattr__(self, "subsolver", Subsolver(self.subsolver))
        if self.n_constructions_per_iter < 1:
            raise ValueError("n_constructions_per_iter must be positive")
        if self.age_max < 1:
            raise ValueError("age_max must be positive")
        if self.max_iterations is None and self.slice >= self.total_time_limit:
            raise ValueError("solver_time_slice must be below total_time_limit")

    @property
    def slice(self) -> float:
        if self.solver_time_slice is not None:
            return self.solver_time_slice
        return 0.1 * self.total_time_limit


def components_of(inst: Instance, sol: Solution) -> set[Component]:
    """Arc and assignment components of a solution, in physical ids."""
    out: set[Component] = set()
    for r in sol.routes:
        if r.echelon == 1:
            for a, b in zip(r.stops, r.stops[1:]):
                out.add(Component("arc1", a, b))
        else:
            stops = [s for s in r.stops if inst.node(s).role is not NodeRole.STATION]
            for a, b in zip(stops, stops[1:]):
                out.add(Component("arc2", a, b))
    for c, s in sol.assignment.items():
        out.add(Component("assign", c, s))
    return out


def _allowed(inst: Instance, components) -> tuple[set, set]:
    arcs, assign = set(), set()
    for comp in components:
        if comp.kind == "arc2":
            arcs.add((inst.idx(comp.a), inst.idx(comp.b)))
        elif comp.kind == "assign":
            assign.add((inst.idx(comp.a), inst.idx(comp.b)))
    return arcs, assign


def _objective(inst: Instance, sol: Solution) -> float:
    return evaluate(inst, sol).objective


def restricted_solve(inst: Instance, components, time_slice: float,
                     subsolver: Subsolver = Subsolver.VNS_INNER,
                     seeds: list[Solution] | None = None, rng: random.Random | None = None,
                     iterations: int | None = None, search: Search | None = None,
                     milp_runner: MilpRunner | None = None) -> Solution:
    """Best solution using only the given components.

    ``seeds`` are feasible solutions inside the component set; the best of
    them is the fallback whenever the subsolver fails or runs out of time.
    """
    subsolver = Subsolver(subsolver)
    seeds = [s for s in (seeds or []) if evaluate(inst, s).feasible]
    fallback = min(seeds, key=lambda s: _objective(inst, s)) if seeds else None
    arcs, assign = _allowed(inst, components)
    try:
        if subsolver is Subsolver.EXACT_ORACLE:
            sol, _ = exact_solve(inst, budget=time_slice, allowed_arcs=arcs, allowed_assign=assign)
        elif subsolver is Subsolver.EXTERNAL_MILP:
            sol = _milp_solve(inst, components, time_slice, milp_runner)
        else:
            if fallback is None:
                raise TimeSliceExceeded("the inner search needs a starting solution")
            sol = _vns_inner(inst, fallback, arcs, assign, time_slice, rng, iterations, search)
    except (InstanceTooLarge, NoFeasibleSolution, TimeSliceExceeded, ConstructionFailed, OSError, ValueError):
        if fallback is None:
            raise
        return fallback
    if fallback is not None and _objective(inst, sol) > _objective(inst, fallback) + EPS:
        return fallback
    return sol


def _vns_inner(inst, start, arcs, assign, time_slice, rng, iterations, search):
    ctx = search.ctx if search is not None else Ctx(inst)
    t0 = time.monotonic()
    deadline = math.inf if iterations is not None else t0 + time_slice
    if search is None:
        search = Search(ctx, rng or random.Random(0))
    search.rng = rng or search.rng
    search.deadline = deadline
    search.allowed_arcs = arcs
    search.allowed_assign = assign
    cfg = VnsConfig(flavor="red", time_limit=max(time_slice, 1e-9),
                    max_iterations=iterations if iterations is not None else None)
    try:
        plan, cost, _ = run_vns(search, from_solution(ctx, start), cfg, t0, stall=4 * cfg.k_max)
    finally:
        search.allowed_arcs = None
        search.allowed_assign = None
    trucks = build_trucks(ctx, plan)
    if trucks is None:
        return start
    sol = to_solution(ctx, plan, trucks)
    return sol if evaluate(inst, sol).feasible else start


def _milp_solve(inst, components, time_slice, runner):
    from . import milp

    if runner is None:
        runner = milp.highs_runner
    model = milp.build_model(inst)
    pairs = {(c.a, c.b) for c in components if c.kind == "arc2"}
    assign = {(c.a, c.b) for c in components if c.kind == "assign"}
    fixed = milp.fixings(model, pairs, assign)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        milp.write_fixing(fixed, tmp / "fixing.txt")
        restricted = milp.restrict(model, milp.read_fixing(tmp / "fixing.txt"))
        milp.write_lp(restricted, tmp / "restricted.lp")
        runner(tmp / "restricted.lp", tmp / "solution.txt", time_slice)
        return milp.import_solution(model, inst, tmp / "solution.txt")


def _descend(inst, ctx, search, sol, t0, cfg):
    search.allowed_arcs = search.allowed_assign = None
    search.deadline = math.inf if cfg.max_iterations is not None else t0 + cfg.total_time_limit
    plan, _ = search.local_search(from_solution(ctx, sol))
    trucks = build_trucks(ctx, plan)
    if trucks is None:
        return sol
    out = to_solution(ctx, plan, trucks)
    ev = evaluate(inst, out)
    return out if ev.feasible and ev.objective <= _objective(inst, sol) + EPS else sol


@dataclass
class CmsaStats:
    iterations: int = 0
    constructions: int = 0
    construction_failures: int = 0
    best_construction: float = math.inf
    pool_sizes: list[int] = field(default_factory=list)
    time_to_best: float = 0.0


def cmsa_solve(inst: Instance, cfg: CmsaConfig = CmsaConfig()):
    """Returns (solution, trace); trace rows are (time or iteration, objective).

    ``cmsa_solve.last_stats`` keeps the run statistics of the latest call.
    """
    t0 = time.monotonic()
    iter_mode = cfg.max_iterations is not None
    rng = random.Random(cfg.rng_seed)
    ctx = Ctx(inst)
    search = Search(ctx, rng)
    pool: dict[Component, int] = {}
    best: Solution | None = None
    best_obj = math.inf
    trace: list[tuple[float, float]] = []
    stats = CmsaStats()
    seed = cfg.construct_cfg.rng_seed
    it = 0

    def stamp():
        return it if iter_mode else time.monotonic() - t0

    while True:
        if iter_mode:
            if it >= cfg.max_iterations:
                break
        elif time.monotonic() - t0 >= cfg.total_time_limit:
            break
        it += 1
        built = []
        for _ in range(cfg.n_constructions_per_iter):
            if not iter_mode and time.monotonic() - t0 >= cfg.total_time_limit and best is not None:
                break
            try:
                sol = construct(inst, replace(cfg.construct_cfg, rng_seed=seed), ctx)
            except ConstructionFailed:
                stats.construction_failures += 1
                sol = None
            seed += 1
            stats.constructions += 1
            if sol is None:
                continue
            if cfg.improve_constructions:
                sol = _descend(inst, ctx, search, sol, t0, cfg)
            built.append(sol)
            obj = _objective(inst, sol)
            stats.best_construction = min(stats.best_construction, obj)
            if obj < best_obj - EPS:
                best, best_obj = sol, obj
                stats.time_to_best = time.monotonic() - t0
                trace.append((stamp(), best_obj))
            for comp in components_of(inst, sol):
                pool.setdefault(comp, 0)
        if best is None:
            continue
        remaining = cfg.total_time_limit - (time.monotonic() - t0)
        slice_ = cfg.slice if iter_mode else max(0.0, min(cfg.slice, remaining))
        sol = restricted_solve(inst, set(pool), slice_, cfg.subsolver, built + [best], rng,
                               cfg.inner_iterations if iter_mode else None, search, cfg.milp_runner)
        obj = _objective(inst, sol)
        if obj < best_obj - EPS:
            best, best_obj = sol, obj
            stats.time_to_best = time.monotonic() - t0
            trace.append((stamp(), best_obj))
        # adapt
        used = components_of(inst, sol)
        for comp in list(pool):
            pool[comp] = 0 if comp in used else pool[comp] + 1
            if pool[comp] > cfg.age_max:
                del pool[comp]
        for comp in components_of(inst, best):
            pool[comp] = 0
        stats.pool_sizes.append(len(pool))
    stats.iterations = it
    cmsa_solve.last_stats = stats
    if best is None:
        # degrade to a greedy construction
        best = construct(inst, replace(cfg.construct_cfg, determinism_rate=1.0), ctx)
        trace.append((stamp(), _objective(inst, best)))
    return best, trace


cmsa_solve.last_stats = None
