"""Exact solver for tiny instances, used as the optimality oracle.

For every satellite and EV start time, a labeling procedure enumerates all
elementary EV routes (customers plus any station visits, full recharge at
stations) and keeps per customer subset the cheapest feasible route. A
set-partition DP over subsets combines routes per satellite. Truck routes
are enumerated explicitly over satellite subsets, partitions, orders and
depots, and customer subsets are distributed over the visited satellites.

Each satellite receives at most one truck visit here, so split truck
deliveries are outside the enumerated space.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from enum import Enum

from .instance import Instance
from .routing import EPS, Ctx, Truck, _truck_ok, to_solution, truck_dist
from .solution import Solution, evaluate


class InstanceTooLarge(ValueError):
    pass


class NoFeasibleSolution(RuntimeError):
    pass


class Proof(str, Enum):
    OPTIMAL = "optimal"
    BUDGET_EXHAUSTED = "budget_exhausted"


class _Budget(Exception):
    pass


RESTRICTED_CAP = 20


def default_cap(inst: Instance) -> int:
    split = any(inst.nodes[i].origin for i in inst.customers)
    return 10 if split else 6


@dataclass
class _RouteTable:
    best: dict          # mask -> (cost, path)
    options: dict       # mask -> [(cost, path, usage)] Pareto in (cost, usage)
    part: dict          # mask -> (cost, [sub masks]) best partition


class _Solver:
    def __init__(self, inst: Instance, deadline: float, allowed_arcs=None, allowed_assign=None):
        self.inst = inst
        self.ctx = Ctx(inst)
        self.deadline = deadline
        self.allowed_arcs = allowed_arcs
        self.allowed_assign = allowed_assign
        self.custs = list(self.ctx.customers)
        self.bit = {c: 1 << k for k, c in enumerate(self.custs)}
        self.full = (1 << len(self.custs)) - 1
        ctx = self.ctx
        self.mask_dem = [0.0] * (self.full + 1)
        self.mask_pick = [0.0] * (self.full + 1)
        for m in range(1, self.full + 1):
            low = m & -m
            c = self.custs[low.bit_length() - 1]
            self.mask_dem[m] = self.mask_dem[m ^ low] + ctx.dem[c]
            self.mask_pick[m] = self.mask_pick[m ^ low] + ctx.pick[c]
        self.tables: dict = {}
        self.ticks = 0

    def _tick(self):
        self.ticks += 1
        if self.ticks % 2048 == 0 and time.monotonic() > self.deadline:
            raise _Budget()

    # --- EV routes ---------------------------------------------------------------

    def _arc_ok(self, a: int, b: int) -> bool:
        return self.allowed_arcs is None or (a, b) in self.allowed_arcs

    def table(self, sat: int, start: float) -> _RouteTable:
        key = (sat, round(start, 6))
        if key not in self.tables:
            self.tables[key] = self._label(sat, start)
        return self.tables[key]

    def _label(self, sat: int, start: float) -> _RouteTable:
        ctx = self.ctx
        d, t, h, B, g = ctx.d, ctx.t, ctx.h, ctx.B, ctx.g
        tw, spd, q2 = ctx.tw, ctx.spd, ctx.q2
        stations = ctx.stations
        st_pos = {f: k for k, f in enumerate(stations)}
        limit = [ctx.station_limit[f] for f in stations]
        allowed = [c for c in self.custs
                   if self.allowed_assign is None or (c, sat) in self.allowed_assign]
        # label: (cost, bsc, time, maxexc, path)
        buckets: dict = {}
        levels: list[list] = [[] for _ in range(len(self.custs) + 1)]
        zero = tuple(0 for _ in stations)
        root = (0, sat, sat, zero)
        buckets[root] = [(0.0, B, start + ctx.s[sat], 0.0, ())]
        levels[0].append(root)
        closed: dict = {}

        def push(key, lab, level):
            lst = buckets.get(key)
            if lst is None:
                buckets[key] = [lab]
                levels[level].append(key)
                return
            c, b, tm, mx = lab[0], lab[1], lab[2], lab[3]
            for o in lst:
                if (o[0] <= c + EPS and o[1] >= b - EPS and o[2] <= tm + EPS
                        and o[3] <= mx + EPS):
                    return
            lst[:] = [o for o in lst if not (c <= o[0] + EPS and b >= o[1] - EPS
                                             and tm <= o[2] + EPS and mx <= o[3] + EPS)]
            lst.append(lab)

        def close(mask, usage, cost, path):
            opts = closed.setdefault(mask, [])
            for o in opts:
                if o[0] <= cost + EPS and all(x <= y for x, y in zip(o[2], usage)):
                    return
            opts[:] = [o for o in opts if not (cost <= o[0] + EPS
                                               and all(x <= y for x, y in zip(usage, o[2])))]
            opts.append((cost, path, usage))

        for level in range(len(self.custs) + 1):
            # customer- and satellite-ended labels first: they spawn station labels
            keys = levels[level]
            ordered = ([k for k in keys if not ctx.is_station[k[1]]]
                       + [k for k in keys if ctx.is_station[k[1]]])
            seen_station = set()
            idx = 0
            while idx < len(ordered):
                key = ordered[idx]
                idx += 1
                mask, last, prev_ns, usage = key
                for lab in list(buckets.get(key, ())):
                    self._tick()
                    cost, bsc, tm, mx, path = lab
                    dem = self.mask_dem[mask]
                    # close the route
                    if mask and self._arc_ok(prev_ns, sat):
                        b2 = bsc - h * d[last][sat]
                        if b2 >= -EPS:
                            close(mask, usage, cost + d[last][sat], path)
                    # extend to customers
                    for c in allowed:
                        bit = self.bit[c]
                        if mask & bit or not self._arc_ok(prev_ns, c):
                            continue
                        nm = mask | bit
                        if self.mask_dem[nm] > q2 + EPS:
                            continue
                        b2 = bsc - h * d[last][c]
                        if b2 < -EPS:
                            continue
                        if tw:
                            arr = tm + t[last][c]
                            if arr > ctx.l[c] + EPS:
                                continue
                            tm2 = max(arr, ctx.e[c]) + ctx.s[c]
                        else:
                            tm2 = 0.0
                        mx2 = mx
                        if spd:
                            mx2 = max(mx, self.mask_pick[nm] - self.mask_dem[nm])
                            if self.mask_dem[nm] + mx2 > q2 + EPS:
                                continue
                        push((nm, c, c, usage), (cost + d[last][c], b2, tm2, mx2, path + (c,)),
                             level + 1)
                    # extend to stations; recharging right after the satellite
                    # or at a second station can still pay off
                    for f in stations:
                        k = st_pos[f]
                        if f == last or usage[k] >= limit[k]:
                            continue
                        b2 = bsc - h * d[last][f]
                        if b2 < -EPS:
                            continue
                        tm2 = tm + t[last][f] + ctx.s[f] + g * (B - b2) if tw else 0.0
                        nu = usage[:k] + (usage[k] + 1,) + usage[k + 1:]
                        nkey = (mask, f, prev_ns, nu)
                        push(nkey, (cost + d[last][f], B, tm2, mx, path + (f,)), level)
                        if nkey not in seen_station:
                            seen_station.add(nkey)
                            ordered.append(nkey)
            levels[level] = []
        best = {m: min(opts, key=lambda o: (o[0], o[1]))[:2] for m, opts in closed.items()}
        options = {m: sorted(opts, key=lambda o: (o[0], o[1])) for m, opts in closed.items()}
        return _RouteTable(best, options, self._partition(best))

    def _partition(self, best: dict) -> dict:
        c_ev = self.ctx.c_ev
        part = {0: (0.0, [])}
        for mask in range(1, self.full + 1):
            self._tick()
            low = mask & -mask
            rest = mask ^ low
            top = None
            sub = rest
            while True:
                m = sub | low
                if m in best and (mask ^ m) in part:
                    val = best[m][0] + c_ev + part[mask ^ m][0]
                    if top is None or val < top[0] - EPS:
                        top = (val, m)
                if sub == 0:
                    break
                sub = (sub - 1) & rest
            if top is not None:
                part[mask] = (top[0], [top[1]] + part[mask ^ top[1]][1])
        return part

    # --- first echelon ------------------------------------------------------------

    def truck_configs(self):
        """Yield (cost, blocks) with blocks = [(depot, [sat, ...])]."""
        ctx = self.ctx
        sats = ctx.sats
        for r in range(1, len(sats) + 1):
            for used in itertools.combinations(sats, r):
                for blocks in _set_partitions(list(used)):
                    options = []
                    for block in blocks:
                        opts = []
                        for perm in itertools.permutations(block):
                            if len(perm) > 1 and perm[0] > perm[-1] and not (ctx.tw or ctx.spd):
                                continue  # mirrored order has equal cost
                            for dep in ctx.depots:
                                opts.append((dep, list(perm)))
                        options.append(opts)
                    for combo in itertools.product(*options):
                        yield list(combo)


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def _arrivals(ctx: Ctx, blocks) -> dict[int, float]:
    out = {}
    for dep, stops in blocks:
        tm = ctx.s[dep]
        prev = dep
        for s in stops:
            tm += ctx.t[prev][s]
            out[s] = tm
            tm += ctx.s[s]
            prev = s
    return out


def _distribute(full: int, sats: list[int]):
    """All ways to split ``full`` into non-empty masks, one per satellite."""
    if len(sats) == 1:
        if full:
            yield {sats[0]: full}
        return
    sub = full
    while sub:
        for rest in _distribute(full ^ sub, sats[1:]):
            out = {sats[0]: sub}
            out.update(rest)
            yield out
        sub = (sub - 1) & full


def exact_solve(inst: Instance, budget: float = 60.0, cap: int | None = None,
                allowed_arcs=None, allowed_assign=None) -> tuple[Solution, Proof]:
    """Optimal solution of a tiny instance.

    ``allowed_arcs`` (pairs of node indices between consecutive non-station
    stops, satellites included) and ``allowed_assign`` (customer, satellite)
    pairs restrict the search, which is how the CMSA subsolver uses it.
    """
    if cap is None:
        # a component restriction prunes most arcs, so larger instances stay cheap
        cap = RESTRICTED_CAP if allowed_arcs is not None else default_cap(inst)
    if inst.n_customers > cap:
        raise InstanceTooLarge(f"{inst.n_customers} customers exceed the cap of {cap}")
    if len(inst.satellites) > 4:
        raise InstanceTooLarge("too many satellites for truck enumeration")
    solver = _Solver(inst, time.monotonic() + budget, allowed_arcs, allowed_assign)
    ctx = solver.ctx
    best = None
    proof = Proof.OPTIMAL
    try:
        for blocks in solver.truck_configs():
            best = _solve_config(solver, blocks, best)
    except _Budget:
        proof = Proof.BUDGET_EXHAUSTED
    if best is None:
        if proof is Proof.BUDGET_EXHAUSTED:
            raise NoFeasibleSolution("budget exhausted before a feasible solution was found")
        raise NoFeasibleSolution("instance has no feasible solution in the enumerated space")
    _, plan, trucks = best
    sol = to_solution(ctx, plan, trucks)
    ev = evaluate(inst, sol)
    if not ev.feasible:  # pragma: no cover - guards the oracle itself
        raise AssertionError(f"exact solution infeasible: {ev.violations}")
    return sol, proof


def _solve_config(solver: _Solver, blocks, best):
    ctx = solver.ctx
    tcost = sum(truck_dist(ctx, Truck(dep, stops, [0.0] * len(stops), [0.0] * len(stops)))
                + ctx.c_lv for dep, stops in blocks)
    if best is not None and tcost >= best[0] - EPS:
        return best
    arrivals = _arrivals(ctx, blocks)
    used = sorted(arrivals)
    tables = {s: solver.table(s, arrivals[s] if ctx.tw else ctx.sat_ready[s]) for s in used}
    latest = {}
    for split in _distribute(solver.full, used):
        solver._tick()
        parts = [tables[s].part.get(m) for s, m in split.items()]
        if any(p is None for p in parts):
            continue
        total = tcost + sum(p[0] for p in parts)
        if best is not None and total >= best[0] - EPS:
            continue
        trucks = []
        for dep, stops in blocks:
            tr = Truck(dep, list(stops), [solver.mask_dem[split[s]] for s in stops],
                       [solver.mask_pick[split[s]] for s in stops])
            if not _truck_ok(ctx, tr, latest):
                break
            trucks.append(tr)
        else:
            plan = {s: [list(tables[s].best[m][1]) for m in tables[s].part[split[s]][1]]
                    for s in used}
            if not ctx.usage_ok(ctx.station_usage(plan)):
                found = _usage_search(solver, tables, split, tcost, best)
                if found is None:
                    continue
                total, plan = found
            best = (total, plan, trucks)
    return best


def _usage_search(solver: _Solver, tables, split, tcost, best):
    """Cheapest route choice for a fixed split that respects station limits."""
    ctx = solver.ctx
    stations = ctx.stations
    limit = [ctx.station_limit[f] for f in stations]
    c_ev = ctx.c_ev
    jobs = sorted(split.items())
    incumbent = [best[0] if best is not None else math.inf, None]

    def rec(j, remaining, usage, cost, chosen):
        solver._tick()
        if j == len(jobs):
            if cost < incumbent[0] - EPS:
                incumbent[0], incumbent[1] = cost, [list(c) for c in chosen]
            return
        s, _ = jobs[j]
        if remaining == 0:
            nxt = jobs[j + 1][1] if j + 1 < len(jobs) else 0
            rec(j + 1, nxt, usage, cost, chosen)
            return
        table = tables[s]
        if remaining not in table.part:
            return
        bound = cost + table.part[remaining][0] + sum(
            tables[t].part[m][0] for t, m in jobs[j + 1:])
        if bound >= incumbent[0] - EPS:
            return
        low = remaining & -remaining
        rest = remaining ^ low
        sub = rest
        while True:
            m = sub | low
            for rc, path, use in table.options.get(m, ()):
                nu = tuple(a + b for a, b in zip(usage, use))
                if any(x > y for x, y in zip(nu, limit)):
                    continue
                if (remaining ^ m) and (remaining ^ m) not in table.part:
                    continue
                chosen.append((s, path))
                rec(j, remaining ^ m, nu, cost + rc + c_ev, chosen)
                chosen.pop()
            if sub == 0:
                break
            sub = (sub - 1) & rest

    rec(0, jobs[0][1], tuple(0 for _ in stations), tcost, [])
    if incumbent[1] is None:
        return None
    plan: dict = {s: [] for s, _ in jobs}
    for s, path in incumbent[1]:
        plan[s].append(list(path))
    return incumbent[0], plan
