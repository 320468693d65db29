"""Probabilistic Clarke-Wright savings and cheapest-insertion construction.

Customers go to their nearest satellite (the next nearest if they cannot be
served from it at all), EV routes are built per satellite, and the first
echelon is derived from the resulting satellite loads.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, replace
from enum import Enum

from .instance import Instance
from .routing import EPS, Ctx, Plan, build_trucks, plan_cost, to_solution
from .solution import Solution, evaluate


class Heuristic(str, Enum):
    SAVINGS = "savings"
    INSERTION = "insertion"


class ConstructionFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class ConstructConfig:
    heuristic: Heuristic = Heuristic.SAVINGS
    determinism_rate: float = 0.8
    candidate_list_size: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "heuristic", Heuristic(self.heuristic))
        if not 0.0 <= self.determinism_rate <= 1.0:
            raise ValueError("determinism_rate must lie in [0, 1]")
        if self.candidate_list_size < 1:
            raise ValueError("candidate_list_size must be positive")


def pick_index(n: int, rng: random.Random, rate: float, size: int) -> int:
    """Greedy with probability ``rate``, else uniform over the first ``size``."""
    if n <= 1 or rng.random() < rate:
        return 0
    return rng.randrange(min(size, n))


def fix_station_usage(ctx: Ctx, plan: Plan) -> bool:
    """Reroute stations so no station exceeds its visit limit; False on failure.

    Construction ignores the limit while routes are merged and settles it here.
    """
    usage = ctx.station_usage(plan)
    for _ in range(4 * len(ctx.stations) + 4):
        over = [f for f, c in usage.items() if c > ctx.station_limit[f]]
        if not over:
            return True
        f = over[0]
        moved = False
        for sat in sorted(plan):
            for r, seq in enumerate(plan[sat]):
                if f not in seq:
                    continue
                others = dict(usage)
                for k in seq:
                    if ctx.is_station[k]:
                        others[k] -= 1
                others[f] = ctx.station_limit[f]
                new = ctx.repair(sat, ctx.strip(seq), others)
                if new is None or f in new:
                    continue
                plan[sat][r] = new
                usage = ctx.station_usage(plan)
                moved = True
                break
            if moved:
                break
        if not moved:
            return False
    return ctx.usage_ok(usage)


def assign_nearest(ctx: Ctx) -> dict[int, list[int]]:
    """Customers per satellite: nearest one able to serve the customer alone."""
    clusters: dict[int, list[int]] = {s: [] for s in ctx.sats}
    for c in ctx.customers:
        for s in ctx.near_sats[c]:
            if ctx.build_route(s, [c]) is not None:
                clusters[s].append(c)
                break
        else:
            raise ConstructionFailed(f"customer {ctx.inst.nodes[c].id} cannot be served")
    return clusters


def savings_routes(ctx: Ctx, sat: int, custs: list[int], rng: random.Random,
                   cfg: ConstructConfig, allowed=None) -> list[list[int]]:
    """Clarke-Wright merges of single-customer routes around ``sat``.

    ``allowed`` optionally restricts which customer pairs may become adjacent.
    """
    d = ctx.d
    seqs: dict[int, list[int]] = {}
    order: dict[int, list[int]] = {}
    owner: dict[int, int] = {}
    for c in custs:
        seq = ctx.build_route(sat, [c])
        if seq is None:
            raise ConstructionFailed(f"customer {ctx.inst.nodes[c].id} cannot be served")
        seqs[c], order[c], owner[c] = seq, [c], c
    cands = []
    for a in range(len(custs)):
        for b in range(a + 1, len(custs)):
            i, j = custs[a], custs[b]
            if allowed is not None and (i, j) not in allowed and (j, i) not in allowed:
                continue
            sv = d[sat][i] + d[sat][j] - d[i][j] + ctx.c_ev
            if sv > EPS:
                cands.append((sv, i, j))
    cands.sort(key=lambda x: (-x[0], x[1], x[2]))
    while cands:
        sv, i, j = cands.pop(pick_index(len(cands), rng, cfg.determinism_rate,
                                        cfg.candidate_list_size))
        ri, rj = owner[i], owner[j]
        if ri == rj:
            continue
        A, B = order[ri], order[rj]
        options = []
        if A[-1] == i and B[0] == j:
            options.append(A + B)
        if B[-1] == j and A[0] == i:
            options.append(B + A)
        if A[-1] == i and B[-1] == j:
            options.append(A + B[::-1])
        if A[0] == i and B[0] == j:
            options.append(A[::-1] + B)
        if not options:
            continue
        best = None
        for custs_order in options:
            if allowed is not None and not _respects(custs_order, allowed):
                continue
            seq = ctx.build_route(sat, custs_order)
            if seq is None:
                continue
            cost = ctx.route_dist(sat, seq)
            if best is None or cost < best[0] - EPS:
                best = (cost, custs_order, seq)
        if best is None:
            continue
        _, merged, seq = best
        del seqs[rj], order[rj]
        seqs[ri], order[ri] = seq, merged
        for c in merged:
            owner[c] = ri
    return [seqs[k] for k in sorted(seqs)]


def _respects(custs: list[int], allowed) -> bool:
    return all((a, b) in allowed or (b, a) in allowed for a, b in zip(custs, custs[1:]))


def insertion_routes(ctx: Ctx, sat: int, custs: list[int], rng: random.Random,
                     cfg: ConstructConfig) -> list[list[int]]:
    """Repeated cheapest feasible insertion, opening routes when needed."""
    orders: list[list[int]] = []
    seqs: list[list[int]] = []
    todo = sorted(custs)
    while todo:
        cands = []
        for c in todo:
            for r, cur in enumerate(orders):
                base = ctx.route_dist(sat, seqs[r])
                for pos in range(len(cur) + 1):
                    seq = ctx.build_route(sat, cur[:pos] + [c] + cur[pos:])
                    if seq is not None:
                        cands.append((ctx.route_dist(sat, seq) - base, c, r, pos, seq))
            seq = ctx.build_route(sat, [c])
            if seq is not None:
                cands.append((ctx.route_dist(sat, seq) + ctx.c_ev, c, -1, 0, seq))
        if not cands:
            raise ConstructionFailed(f"no feasible insertion at satellite {ctx.inst.nodes[sat].id}")
        cands.sort(key=lambda x: (x[0], x[1], x[2], x[3]))
        _, c, r, pos, seq = cands[pick_index(len(cands), rng, cfg.determinism_rate,
                                             cfg.candidate_list_size)]
        if r < 0:
            orders.append([c])
            seqs.append(seq)
        else:
            orders[r] = orders[r][:pos] + [c] + orders[r][pos:]
            seqs[r] = seq
        todo.remove(c)
    return seqs


def construct_plan(ctx: Ctx, cfg: ConstructConfig, rng: random.Random | None = None,
                   attempts: int = 5):
    """Build (plan, trucks) or raise :class:`ConstructionFailed`.

    A randomized build that cannot meet the station visit limits is retried
    with the same generator, then once greedily, before giving up.
    """
    rng = rng or random.Random(cfg.rng_seed)
    error = None
    for k in range(attempts):
        greedy = k == attempts - 1
        try:
            return _construct_once(ctx, replace(cfg, determinism_rate=1.0) if greedy else cfg, rng)
        except ConstructionFailed as exc:
            error = exc
    raise error


def _construct_once(ctx: Ctx, cfg: ConstructConfig, rng: random.Random):
    clusters = assign_nearest(ctx)
    plan: Plan = {}
    for sat in ctx.sats:
        custs = clusters[sat]
        if cfg.heuristic is Heuristic.SAVINGS:
            plan[sat] = savings_routes(ctx, sat, custs, rng, cfg)
        else:
            plan[sat] = insertion_routes(ctx, sat, custs, rng, cfg)
    plan = {s: [ctx.drop_stations(s, r) for r in routes] for s, routes in plan.items()}
    if not fix_station_usage(ctx, plan):
        raise ConstructionFailed("station visit limits cannot be met")
    trucks = build_trucks(ctx, plan)
    if trucks is None:
        raise ConstructionFailed("satellite loads cannot be delivered by trucks")
    return plan, trucks


def construct(inst: Instance, cfg: ConstructConfig = ConstructConfig(), ctx: Ctx | None = None) -> Solution:
    ctx = ctx or Ctx(inst)
    plan, trucks = construct_plan(ctx, cfg)
    sol = to_solution(ctx, plan, trucks)
    ev = evaluate(inst, sol)
    if not ev.feasible:
        raise ConstructionFailed(f"constructed solution violates {ev.violations[:3]}")
    return sol


@dataclass(frozen=True)
class BestOfStats:
    best: float
    mean: float
    values: tuple[float, ...]
    failures: int


def best_of(inst: Instance, cfg: ConstructConfig = ConstructConfig(), runs: int = 10):
    """Best of ``runs`` constructions seeded ``cfg.rng_seed .. +runs-1``."""
    if runs < 1:
        raise ValueError("runs must be positive")
    ctx = Ctx(inst)
    best, values, failures = None, [], 0
    last_error = None
    for r in range(runs):
        try:
            sol = construct(inst, replace(cfg, rng_seed=cfg.rng_seed + r), ctx)
        except ConstructionFailed as exc:
            failures += 1
            last_error = exc
            continue
        obj = evaluate(inst, sol).objective
        values.append(obj)
        if best is None or obj < best[0] - EPS:
            best = (obj, sol)
    if best is None:
        raise last_error
    return best[1], BestOfStats(best[0], statistics.fmean(values), tuple(values), failures)


def objective_of(ctx: Ctx, plan: Plan) -> float:
    return plan_cost(ctx, plan)
