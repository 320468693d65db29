"""Variable neighborhood search in a reduced and a full flavor.

The reduced flavor alternates shaking and first-improvement local search; the
full flavor adds a destroy-and-repair step after each descent. Moves work on
the customer order of EV routes; stations are re-derived greedily for every
touched route and redundant ones dropped. Only validator-feasible plans are
ever accepted as incumbent.

The operator set (relocate, swap, 2-opt, or-opt, station insert/remove,
satellite reassignment) is a reconstruction.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .construct import fix_station_usage
from .instance import Instance
from .routing import (EPS, Ctx, Plan, build_trucks, copy_plan, from_solution,
                      to_solution, trucks_cost)
from .solution import Solution, evaluate


class Flavor(str, Enum):
    RED = "red"
    FULL = "full"


OPERATORS = ("relocate", "swap", "two_opt", "or_opt", "station_insert",
             "station_remove", "reassign")


class RepairFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class VnsConfig:
    flavor: Flavor = Flavor.FULL
    k_max: int = 5
    neighborhood_order: tuple[str, ...] = OPERATORS
    time_limit: float = 150.0
    rng_seed: int = 0
    destroy_fraction: float = 0.2
    # iteration budget; when set, the wall clock is ignored for reproducibility
    max_iterations: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "flavor", Flavor(self.flavor))
        object.__setattr__(self, "neighborhood_order", tuple(self.neighborhood_order))
        if self.k_max < 1:
            raise ValueError("k_max must be positive")
        unknown = set(self.neighborhood_order) - set(OPERATORS)
        if unknown:
            raise ValueError(f"unknown operators {sorted(unknown)}")
        if not 0.0 <= self.destroy_fraction <= 1.0:
            raise ValueError("destroy_fraction must lie in [0, 1]")


class Search:
    """Move machinery over a plan; optionally restricted to a component set.

    ``allowed_arcs`` holds directed pairs of consecutive non-station stops
    (satellites included) and ``allowed_assign`` (customer, satellite) pairs.
    """

    def __init__(self, ctx: Ctx, rng: random.Random | None = None, deadline: float = math.inf,
                 allowed_arcs=None, allowed_assign=None, order=OPERATORS):
        self.ctx = ctx
        self.rng = rng or random.Random(0)
        self.deadline = deadline
        self.allowed_arcs = allowed_arcs
        self.allowed_assign = allowed_assign
        self.order = tuple(order)
        self.cache: dict = {}
        n = len(ctx.customers)
        self.granular = n > 30
        k = 15
        self.neighbors = {
            c: set(sorted((o for o in ctx.customers if o != c), key=lambda o: (ctx.d[c][o], o))[:k])
            for c in ctx.customers
        }

    # --- helpers --------------------------------------------------------------

    def out_of_time(self) -> bool:
        return time.monotonic() > self.deadline

    def arcs_ok(self, sat: int, cs) -> bool:
        al = self.allowed_arcs
        if al is None:
            return True
        prev = sat
        for k in cs:
            if (prev, k) not in al:
                return False
            prev = k
        return (prev, sat) in al

    def assign_ok(self, c: int, sat: int) -> bool:
        return self.allowed_assign is None or (c, sat) in self.allowed_assign

    def route(self, sat: int, cs):
        """(seq, dist) of the best greedy route over customer order ``cs``."""
        if not self.arcs_ok(sat, cs):
            return None
        key = (sat, tuple(cs))
        hit = self.cache.get(key, False)
        if hit is not False:
            return hit
        res = None
        seq = self.ctx.build_route(sat, list(cs))
        if seq is not None:
            seq = self.ctx.drop_stations(sat, seq)
            res = (seq, self.ctx.route_dist(sat, seq))
        if len(self.cache) > 300_000:
            self.cache.clear()
        self.cache[key] = res
        return res

    def cost(self, plan: Plan) -> float:
        if not self.ctx.usage_ok(self.ctx.station_usage(plan)):
            return math.inf
        trucks = build_trucks(self.ctx, plan)
        if trucks is None:
            return math.inf
        return self.ctx.ev_cost(plan) + trucks_cost(self.ctx, trucks)

    def apply(self, plan: Plan, cur: float, edits, force: bool = False):
        """Apply edits [(sat, idx|None, customers)] if they improve ``cur``.

        Returns (plan, cost) or None. An empty customer list deletes the route.
        """
        ctx = self.ctx
        delta = 0.0
        new_seqs = []
        for sat, idx, cs in edits:
            old = plan[sat][idx] if idx is not None else None
            if cs:
                r = self.route(sat, cs)
                if r is None:
                    return None
                new_seqs.append((sat, idx, r[0]))
                delta += r[1] + (ctx.c_ev if old is None else 0.0)
            else:
                new_seqs.append((sat, idx, None))
                if old is not None:
                    delta -= ctx.c_ev
            if old is not None:
                delta -= ctx.route_dist(sat, old)
        if delta > -EPS and not force:
            return None
        out = {s: list(routes) for s, routes in plan.items()}
        removed: dict = {}
        for sat, idx, seq in new_seqs:
            if idx is None:
                if seq is not None:
                    out[sat].append(seq)
            elif seq is None:
                removed.setdefault(sat, []).append(idx)
            else:
                out[sat][idx] = seq
        for sat, idxs in removed.items():
            for i in sorted(idxs, reverse=True):
                del out[sat][i]
        total = self.cost(out)
        if total < cur - EPS or (force and total < math.inf):
            return out, total
        return None

    # --- neighborhoods -----------------------------------------------------------

    def _stripped(self, plan: Plan):
        return {s: [self.ctx.strip(r) for r in routes] for s, routes in plan.items()}

    def _near(self, c: int, cs, j: int) -> bool:
        if not self.granular:
            return True
        nb = self.neighbors[c]
        return (j > 0 and cs[j - 1] in nb) or (j < len(cs) and cs[j] in nb) or not cs

    def relocate(self, plan, cur, other_sats=False):
        strip = self._stripped(plan)
        for s, routes in strip.items():
            for r, cs in enumerate(routes):
                for i, c in enumerate(cs):
                    rest = cs[:i] + cs[i + 1:]
                    targets = [t for t in strip if (t != s) == other_sats and self.assign_ok(c, t)]
                    for t in targets:
                        for r2, cs2 in enumerate(strip[t]):
                            same = t == s and r2 == r
                            base = rest if same else cs2
                            for j in range(len(base) + 1):
                                if same and j == i:
                                    continue
                                if not self._near(c, base, j):
                                    continue
                                new = base[:j] + [c] + base[j:]
                                edits = [(t, r2, new)] if same else [(s, r, rest), (t, r2, new)]
                                res = self.apply(plan, cur, edits)
                                if res:
                                    return res
                        if rest or t != s:
                            res = self.apply(plan, cur, [(s, r, rest), (t, None, [c])])
                            if res:
                                return res
                    if self.out_of_time():
                        return None
        return None

    def reassign(self, plan, cur):
        if len(self.ctx.sats) < 2:
            return None
        return self.relocate(plan, cur, other_sats=True)

    def swap(self, plan, cur):
        strip = self._stripped(plan)
        slots = [(s, r, i, c) for s, routes in strip.items()
                 for r, cs in enumerate(routes) for i, c in enumerate(cs)]
        for a in range(len(slots)):
            s1, r1, i1, c1 = slots[a]
            for b in range(a + 1, len(slots)):
                s2, r2, i2, c2 = slots[b]
                if self.granular and c2 not in self.neighbors[c1]:
                    continue
                if not (self.assign_ok(c1, s2) and self.assign_ok(c2, s1)):
                    continue
                if (s1, r1) == (s2, r2):
                    cs = list(strip[s1][r1])
                    cs[i1], cs[i2] = cs[i2], cs[i1]
                    edits = [(s1, r1, cs)]
                else:
                    cs1 = list(strip[s1][r1])
                    cs2 = list(strip[s2][r2])
                    cs1[i1], cs2[i2] = c2, c1
                    edits = [(s1, r1, cs1), (s2, r2, cs2)]
                res = self.apply(plan, cur, edits)
                if res:
                    return res
            if self.out_of_time():
                return None
        return None

    def two_opt(self, plan, cur):
        strip = self._stripped(plan)
        for s, routes in strip.items():
            for r, cs in enumerate(routes):
                for i in range(len(cs) - 1):
                    for j in range(i + 1, len(cs)):
                        new = cs[:i] + cs[i:j + 1][::-1] + cs[j + 1:]
                        res = self.apply(plan, cur, [(s, r, new)])
                        if res:
                            return res
        return None

    def or_opt(self, plan, cur):
        strip = self._stripped(plan)
        for s, routes in strip.items():
            for r, cs in enumerate(routes):
                for i in range(len(cs) - 1):
                    seg = cs[i:i + 2]
                    rest = cs[:i] + cs[i + 2:]
                    for r2, cs2 in enumerate(routes):
                        same = r2 == r
                        base = rest if same else cs2
                        for j in range(len(base) + 1):
                            if same and j == i:
                                continue
                            if not self._near(seg[0], base, j):
                                continue
                            for piece in (seg, seg[::-1]):
                                new = base[:j] + piece + base[j:]
                                edits = [(s, r, new)] if same else [(s, r, rest), (s, r2, new)]
                                res = self.apply(plan, cur, edits)
                                if res:
                                    return res
                if self.out_of_time():
                    return None
        return None

    def _raw_edit(self, plan, cur, sat, r, seq):
        ctx = self.ctx
        if not ctx.feasible(sat, seq) or not self.arcs_ok(sat, ctx.strip(seq)):
            return None
        if ctx.route_dist(sat, seq) >= ctx.route_dist(sat, plan[sat][r]) - EPS:
            return None
        out = {s: list(routes) for s, routes in plan.items()}
        out[sat][r] = seq
        total = self.cost(out)
        return (out, total) if total < cur - EPS else None

    def station_insert(self, plan, cur):
        ctx = self.ctx
        for s, routes in plan.items():
            for r, seq in enumerate(routes):
                for j in range(len(seq) + 1):
                    for f in ctx.stations:
                        res = self._raw_edit(plan, cur, s, r, seq[:j] + [f] + seq[j:])
                        if res:
                            return res
        return None

    def station_remove(self, plan, cur):
        ctx = self.ctx
        for s, routes in plan.items():
            for r, seq in enumerate(routes):
                for j, k in enumerate(seq):
                    if ctx.is_station[k]:
                        res = self._raw_edit(plan, cur, s, r, seq[:j] + seq[j + 1:])
                        if res:
                            return res
        return None

    def local_search(self, plan: Plan, cur: float | None = None):
        """First-improvement descent to a fixpoint of all operators."""
        cur = self.cost(plan) if cur is None else cur
        ops = [getattr(self, name) for name in self.order]
        improved = True
        while improved and not self.out_of_time():
            improved = False
            for op in ops:
                res = op(plan, cur)
                if res is not None:
                    plan, cur = res
                    improved = True
                    break
        return plan, cur

    # --- perturbation ------------------------------------------------------------

    def insert_cost(self, plan: Plan, c: int):
        """Cheapest feasible insertion of ``c`` as (delta, sat, idx|None, customers)."""
        ctx = self.ctx
        best = None
        for s, routes in plan.items():
            if not self.assign_ok(c, s):
                continue
            for r, seq in enumerate(routes):
                cs = ctx.strip(seq)
                base = ctx.route_dist(s, seq)
                for j in range(len(cs) + 1):
                    new = cs[:j] + [c] + cs[j:]
                    res = self.route(s, new)
                    if res is not None:
                        delta = res[1] - base
                        if best is None or delta < best[0] - EPS:
                            best = (delta, s, r, new)
            res = self.route(s, [c])
            if res is not None:
                delta = res[1] + ctx.c_ev
                if best is None or delta < best[0] - EPS:
                    best = (delta, s, None, [c])
        return best

    def reinsert(self, plan: Plan, pool: list[int]) -> Plan:
        """Greedy cheapest insertion of every pooled customer; raises RepairFailed."""
        plan = copy_plan(plan)
        pool = list(pool)
        while pool:
            best = None
            for c in pool:
                cand = self.insert_cost(plan, c)
                if cand is not None and (best is None or cand[0] < best[0][0] - EPS):
                    best = (cand, c)
            if best is None:
                raise RepairFailed("a removed customer has no feasible position")
            (_, s, r, cs), c = best
            seq = self.route(s, cs)[0]
            if r is None:
                plan[s].append(seq)
            else:
                plan[s][r] = seq
            pool.remove(c)
        return plan

    def _remove(self, plan: Plan, victims) -> Plan:
        ctx = self.ctx
        out: Plan = {}
        victims = set(victims)
        for s, routes in plan.items():
            out[s] = []
            for seq in routes:
                cs = [k for k in ctx.strip(seq) if k not in victims]
                if not cs:
                    continue
                if len(cs) == len(ctx.strip(seq)):
                    out[s].append(seq)
                    continue
                res = self.route(s, cs)
                if res is None:
                    # keep the old station layout if it still works
                    kept = [k for k in seq if k not in victims]
                    if not ctx.feasible(s, kept):
                        raise RepairFailed("route broke after removal")
                    out[s].append(kept)
                else:
                    out[s].append(res[0])
        return out

    def shake(self, plan: Plan, k: int) -> Plan:
        """k random relocations/exchanges, then repair of broken routes."""
        ctx = self.ctx
        rng = self.rng
        strip = {s: [ctx.strip(r) for r in routes] for s, routes in plan.items()}
        slots = [(s, r) for s, routes in strip.items() for r in range(len(routes))]
        for _ in range(k):
            slots = [(s, r) for s, routes in strip.items() for r in range(len(routes)) if routes[r]]
            if not slots:
                break
            s, r = rng.choice(slots)
            cs = strip[s][r]
            i = rng.randrange(len(cs))
            targets = [(t, r2) for t, routes in strip.items() for r2 in range(len(routes))
                       if self.assign_ok(cs[i], t)]
            t, r2 = rng.choice(targets)
            if rng.random() < 0.5 or (t, r2) == (s, r) or not strip[t][r2]:
                c = cs.pop(i)
                dest = strip[t][r2]
                dest.insert(rng.randrange(len(dest) + 1), c)
            else:
                other = strip[t][r2]
                j = rng.randrange(len(other))
                if self.assign_ok(other[j], s):
                    cs[i], other[j] = other[j], cs[i]
        # repair: drop customers from broken routes, reinsert them greedily
        pool: list[int] = []
        out: Plan = {}
        for s, routes in strip.items():
            out[s] = []
            for cs in routes:
                cs = list(cs)
                while cs:
                    res = self.route(s, cs)
                    if res is not None:
                        out[s].append(res[0])
                        break
                    pool.append(cs.pop(rng.randrange(len(cs))))
        rng.shuffle(pool)
        out = self.reinsert(out, pool)
        if not fix_station_usage(ctx, out):
            raise RepairFailed("station limits")
        return out

    def destroy_repair(self, plan: Plan, fraction: float, worst: bool) -> Plan:
        ctx = self.ctx
        custs = [k for routes in plan.values() for seq in routes for k in seq
                 if ctx.is_customer[k]]
        n_remove = math.ceil(fraction * len(custs))
        if n_remove == 0:
            return plan
        n_remove = min(n_remove, len(custs))
        if worst:
            gains = []
            for s, routes in plan.items():
                for seq in routes:
                    cs = ctx.strip(seq)
                    full = ctx.route_dist(s, seq)
                    for i, c in enumerate(cs):
                        rest = cs[:i] + cs[i + 1:]
                        gains.append((full - (ctx.route_dist(s, rest) if rest else -ctx.c_ev), c))
            gains.sort(key=lambda g: (-g[0], g[1]))
            victims = [c for _, c in gains[:n_remove]]
        else:
            victims = self.rng.sample(sorted(custs), n_remove)
        out = self.reinsert(self._remove(plan, victims), victims)
        if not fix_station_usage(ctx, out):
            raise RepairFailed("station limits")
        return out


def _elapsed(t0: float) -> float:
    return time.monotonic() - t0


def run_vns(search: Search, plan: Plan, cfg: VnsConfig, t0: float, stall: int | None = None):
    """Core loop shared with the CMSA subsolver; returns (plan, cost, trace).

    ``stall`` stops the loop after that many consecutive non-improving
    iterations.
    """
    cur = search.cost(plan)
    trace = [(0.0 if cfg.max_iterations is None else 0, cur)]
    if cfg.time_limit <= 0 or cfg.max_iterations == 0:
        return plan, cur, trace
    best_plan, best = search.local_search(plan, cur)
    if best < cur - EPS:
        trace.append((_elapsed(t0) if cfg.max_iterations is None else 0, best))
    k = 1
    it = 0
    idle = 0
    worst = False
    while True:
        it += 1
        if stall is not None and idle >= stall:
            break
        if cfg.max_iterations is not None:
            if it > cfg.max_iterations:
                break
        elif search.out_of_time():
            break
        try:
            cand = search.shake(best_plan, k)
            cand, cost = search.local_search(cand)
            if cfg.flavor is Flavor.FULL:
                try:
                    alt = search.destroy_repair(cand, cfg.destroy_fraction, worst)
                    alt, alt_cost = search.local_search(alt)
                    if alt_cost < cost - EPS:
                        cand, cost = alt, alt_cost
                except RepairFailed:
                    pass
                worst = not worst
        except RepairFailed:
            cost = math.inf
        if cost < best - EPS:
            best_plan, best = cand, cost
            k = 1
            idle = 0
            trace.append((_elapsed(t0) if cfg.max_iterations is None else it, best))
        else:
            k = k + 1 if k < cfg.k_max else 1
            idle += 1
    return best_plan, best, trace


def vns_solve(inst: Instance, init: Solution, cfg: VnsConfig = VnsConfig()):
    """Improve ``init``; returns (solution, trace of (time or iteration, objective))."""
    t0 = time.monotonic()
    ctx = Ctx(inst)
    init_obj = evaluate(inst, init).objective
    if cfg.time_limit <= 0 or cfg.max_iterations == 0:
        return init, [(0.0, init_obj)]
    deadline = math.inf if cfg.max_iterations is not None else t0 + cfg.time_limit
    search = Search(ctx, random.Random(cfg.rng_seed), deadline, order=cfg.neighborhood_order)
    plan = from_solution(ctx, init)
    best_plan, best, trace = run_vns(search, plan, cfg, t0)
    trace[0] = (trace[0][0], init_obj)
    if best >= init_obj - EPS:
        return init, trace
    trucks = build_trucks(ctx, best_plan)
    sol = to_solution(ctx, best_plan, trucks)
    ev = evaluate(inst, sol)
    if not ev.feasible or ev.objective > init_obj + EPS:
        return init, trace
    return sol, trace


def _plan_solution(inst: Instance, sol: Solution):
    ctx = Ctx(inst)
    return ctx, from_solution(ctx, sol)


def _to_sol(ctx: Ctx, plan: Plan, fallback: Solution) -> Solution:
    trucks = build_trucks(ctx, plan)
    if trucks is None:
        return fallback
    sol = to_solution(ctx, plan, trucks)
    return sol if evaluate(ctx.inst, sol).feasible else fallback


def local_search(inst: Instance, sol: Solution, order=OPERATORS) -> Solution:
    ctx, plan = _plan_solution(inst, sol)
    search = Search(ctx, order=order)
    cur = evaluate(inst, sol).objective
    new, cost = search.local_search(plan, cur)
    if cost >= cur - EPS:
        return sol
    return _to_sol(ctx, new, sol)


def shake(inst: Instance, sol: Solution, k: int, rng: random.Random) -> Solution:
    """Perturbed and repaired copy of ``sol`` (``sol`` itself if repair fails)."""
    ctx, plan = _plan_solution(inst, sol)
    try:
        new = Search(ctx, rng).shake(plan, k)
    except RepairFailed:
        return sol
    return _to_sol(ctx, new, sol)


def destroy_repair(inst: Instance, sol: Solution, fraction: float, rng: random.Random,
                   worst: bool = False) -> Solution:
    """Remove and greedily reinsert customers; falls back to ``sol`` on failure."""
    ctx, plan = _plan_solution(inst, sol)
    try:
        new = Search(ctx, rng).destroy_repair(plan, fraction, worst)
    except RepairFailed:
        return sol
    if new is plan:
        return sol
    return _to_sol(ctx, new, sol)


def write_trace(trace, path: str | Path) -> None:
    lines = ["time_or_iter,objective"] + [f"{t},{obj}" for t, obj in trace]
    Path(path).write_text("\n".join(lines) + "\n")
