"""Index-based route primitives shared by the heuristics and the exact solver.

A *plan* maps each satellite index to a list of EV routes; an EV route is the
list of node indices visited strictly between leaving and re-entering the
satellite (customers and stations). Truck routes are derived from a plan by
:func:`build_trucks`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .instance import Instance, NodeRole, Variant
from .solution import Route, Solution

EPS = 1e-6

Plan = dict  # satellite index -> list[list[int]]


class Ctx:
    """Flat arrays of an instance for fast route checks."""

    def __init__(self, inst: Instance):
        self.inst = inst
        nodes = inst.nodes
        self.n = len(nodes)
        self.d = inst.dist
        self.t = inst.travel_time
        self.tw = inst.variant is Variant.TW
        self.spd = inst.variant is Variant.SPD
        self.dem = [n.delivery for n in nodes]
        self.pick = [n.pickup if self.spd else 0.0 for n in nodes]
        self.e = [n.ready for n in nodes]
        self.l = [n.due for n in nodes]
        self.s = [n.service for n in nodes]
        self.is_station = [n.role is NodeRole.STATION for n in nodes]
        self.is_customer = [n.role is NodeRole.CUSTOMER for n in nodes]
        f = inst.fleet
        self.B, self.h, self.g = f.battery, f.consumption, f.charging_rate
        self.q1, self.q2 = f.q1, f.q2
        self.c_lv, self.c_ev = f.cost_lv, f.cost_ev
        self.depots = list(inst.depots)
        self.sats = list(inst.satellites)
        self.stations = list(inst.stations)
        self.customers = list(inst.customers)
        limits = inst.visit_limit
        self.station_limit = {f_: limits[f_] for f_ in self.stations}
        self.sat_limit = {s: limits[s] for s in self.sats}
        # earliest truck arrival at each satellite and the depot achieving it
        self.sat_depot = {}
        self.sat_ready = {}
        for s in self.sats:
            dep = min(self.depots, key=lambda k: (self.d[k][s], k))
            self.sat_depot[s] = dep
            self.sat_ready[s] = self.s[dep] + self.t[dep][s]
        self.near_sats = {
            c: sorted(self.sats, key=lambda s, c=c: (self.d[s][c], s)) for c in self.customers
        }

    # --- EV routes --------------------------------------------------------

    def route_dist(self, sat: int, seq: list[int]) -> float:
        d = self.d
        prev = sat
        total = 0.0
        for k in seq:
            total += d[prev][k]
            prev = k
        return total + d[prev][sat]

    def load_ok(self, seq: list[int]) -> bool:
        dem = self.dem
        u = sum(dem[k] for k in seq)
        if u > self.q2 + EPS:
            return False
        if self.spd:
            pick = self.pick
            v = 0.0
            for k in seq:
                u -= dem[k]
                v += pick[k]
                if u + v > self.q2 + EPS:
                    return False
        return True

    def battery_ok(self, sat: int, seq: list[int]) -> bool:
        d, h, B = self.d, self.h, self.B
        bsc = B
        prev = sat
        for k in seq:
            bsc -= h * d[prev][k]
            if bsc < -EPS:
                return False
            if self.is_station[k]:
                bsc = B
            prev = k
        return bsc - h * d[prev][sat] >= -EPS

    def times(self, sat: int, seq: list[int], start: float | None = None):
        """Arrival times along the route, or None if a due time is missed.

        Returns ``(arrivals, waits, end)`` where waits[k] is the idle time at
        stop k before service.
        """
        d, t, h, B, g = self.d, self.t, self.h, self.B, self.g
        time = (self.sat_ready[sat] if start is None else start) + self.s[sat]
        bsc = B
        prev = sat
        arrivals, waits = [], []
        for k in seq:
            arr = time + t[prev][k]
            bsc -= h * d[prev][k]
            if self.is_station[k]:
                time = arr + self.s[k] + g * max(0.0, B - bsc)
                bsc = B
                waits.append(0.0)
            else:
                if arr > self.l[k] + EPS:
                    return None
                w = max(0.0, self.e[k] - arr)
                waits.append(w)
                time = arr + w + self.s[k]
            arrivals.append(arr)
            prev = k
        return arrivals, waits, time + t[prev][sat]

    def time_ok(self, sat: int, seq: list[int], start: float | None = None) -> bool:
        if not self.tw:
            return True
        return self.times(sat, seq, start) is not None

    def feasible(self, sat: int, seq: list[int], start: float | None = None) -> bool:
        return (self.load_ok(seq) and self.battery_ok(sat, seq)
                and self.time_ok(sat, seq, start))

    def latest_start(self, sat: int, seq: list[int]) -> float:
        """Latest EV departure time from ``sat`` keeping every window."""
        if not self.tw:
            return math.inf
        res = self.times(sat, seq)
        if res is None:
            return -math.inf
        arrivals, waits, _ = res
        slack = math.inf
        waited = 0.0
        for k, arr, w in zip(seq, arrivals, waits):
            if not self.is_station[k]:
                slack = min(slack, self.l[k] - arr + waited)
            waited += w
        return self.sat_ready[sat] + slack

    # --- stations -----------------------------------------------------------

    def strip(self, seq: list[int]) -> list[int]:
        return [k for k in seq if not self.is_station[k]]

    def repair(self, sat: int, seq: list[int], usage: dict | None = None,
               start: float | None = None) -> list[int] | None:
        """Shortest station placement for the customer order of ``seq``; None if none.

        Labels (distance, charge, time) are kept Pareto-optimal per position;
        each arc may receive up to two stations. ``usage`` counts station
        visits made by other routes; stations already at their limit are
        skipped.
        """
        custs = self.strip(seq)
        if not self.load_ok(custs):
            return None
        banned = set()
        if usage:
            banned = {f for f in self.stations if usage.get(f, 0) >= self.station_limit[f]}
        stations = [f for f in self.stations if f not in banned]
        d, t, h, B, g, s = self.d, self.t, self.h, self.B, self.g, self.s
        tw = self.tw
        t0 = (self.sat_ready[sat] if start is None else start) + s[sat]
        # label: (dist, -charge, time, path)
        labels = [(0.0, -B, t0 if tw else 0.0, ())]
        targets = custs + [sat]
        for idx, k in enumerate(targets):
            last = idx == len(targets) - 1
            out = []
            for dist, nbsc, time, path in labels:
                prev = path[-1] if path else sat
                out.extend(self._extend(prev, k, last, dist, -nbsc, time, path, ()))
                for f in stations:
                    if f == prev:
                        continue
                    out.extend(self._extend(prev, k, last, dist, -nbsc, time, path, (f,)))
            if not out or len(stations) <= 6:
                # chains of two stations only matter on long arcs
                for dist, nbsc, time, path in labels:
                    prev = path[-1] if path else sat
                    for f in stations:
                        if f == prev:
                            continue
                        for f2 in stations:
                            if f2 != f:
                                out.extend(self._extend(prev, k, last, dist, -nbsc, time,
                                                        path, (f, f2)))
            if not out:
                return None
            labels = _pareto(out, tw)
        best = min(labels, key=lambda lb: (lb[0], len(lb[3]), lb[3]))
        return list(best[3][:-1])

    def _extend(self, prev, k, last, dist, bsc, time, path, chain):
        d, t, h, B, g, s = self.d, self.t, self.h, self.B, self.g, self.s
        cur = prev
        for f in chain:
            bsc -= h * d[cur][f]
            if bsc < -EPS:
                return ()
            time += t[cur][f] + s[f] + g * max(0.0, B - bsc)
            dist += d[cur][f]
            bsc = B
            cur = f
        bsc -= h * d[cur][k]
        if bsc < -EPS:
            return ()
        dist += d[cur][k]
        if self.tw and not last:
            arr = time + t[cur][k]
            if arr > self.l[k] + EPS:
                return ()
            time = max(arr, self.e[k]) + s[k]
        return ((dist, -bsc, time, path + chain + (k,)),)

    def drop_stations(self, sat: int, seq: list[int], start: float | None = None) -> list[int]:
        """Remove stations one at a time while the route stays feasible."""
        seq = list(seq)
        improved = True
        while improved:
            improved = False
            best = None
            for i, k in enumerate(seq):
                if not self.is_station[k]:
                    continue
                cand = seq[:i] + seq[i + 1:]
                if self.battery_ok(sat, cand) and self.time_ok(sat, cand, start):
                    gain = self.route_dist(sat, seq) - self.route_dist(sat, cand)
                    if best is None or gain > best[0]:
                        best = (gain, cand)
            if best is not None and best[0] > -EPS:
                seq = best[1]
                improved = True
        return seq

    def build_route(self, sat: int, custs: list[int], usage: dict | None = None) -> list[int] | None:
        """Feasible route over the given customer order, stations added as needed."""
        if not self.load_ok(custs):
            return None
        if self.battery_ok(sat, custs):
            return custs if self.time_ok(sat, custs) else None
        return self.repair(sat, custs, usage)

    # --- plans ----------------------------------------------------------------

    def station_usage(self, plan: Plan) -> dict[int, int]:
        usage: dict[int, int] = {}
        for routes in plan.values():
            for seq in routes:
                for k in seq:
                    if self.is_station[k]:
                        usage[k] = usage.get(k, 0) + 1
        return usage

    def usage_ok(self, usage: dict[int, int]) -> bool:
        return all(c <= self.station_limit[f] for f, c in usage.items())

    def ev_cost(self, plan: Plan) -> float:
        total = 0.0
        for sat, routes in plan.items():
            for seq in routes:
                total += self.route_dist(sat, seq) + self.c_ev
        return total


@dataclass
class Truck:
    depot: int
    stops: list[int]          # satellite indices in visiting order
    delivered: list[float]
    picked: list[float]


def _truck_ok(ctx: Ctx, tr: Truck, latest: dict[int, float]) -> bool:
    u = sum(tr.delivered)
    if u > ctx.q1 + EPS:
        return False
    v = 0.0
    for dl, pk in zip(tr.delivered, tr.picked):
        u -= dl
        v += pk
        if u + v > ctx.q1 + EPS:
            return False
    if latest:
        time = ctx.s[tr.depot]
        prev = tr.depot
        for s in tr.stops:
            time += ctx.t[prev][s]
            if time > latest.get(s, math.inf) + EPS:
                return False
            time += ctx.s[s]
            prev = s
    return True


def truck_dist(ctx: Ctx, tr: Truck) -> float:
    prev = tr.depot
    total = 0.0
    for s in tr.stops:
        total += ctx.d[prev][s]
        prev = s
    return total + ctx.d[prev][tr.depot]


def build_trucks(ctx: Ctx, plan: Plan) -> list[Truck] | None:
    """Savings-based first echelon for the satellite loads of a plan.

    Under time windows every truck must reach a satellite before the latest
    start of all EV routes leaving it. Returns None when the satellite loads
    cannot be carried within the visit limits.
    """
    dem, pick = ctx.dem, ctx.pick
    latest: dict[int, float] = {}
    bundles: list[Truck] = []
    for sat in sorted(plan):
        routes = [r for r in plan[sat] if r]
        if not routes:
            continue
        if ctx.tw:
            latest[sat] = min(ctx.latest_start(sat, r) for r in routes)
            if latest[sat] < ctx.sat_ready[sat] - EPS:
                return None
        loads = [(sum(dem[k] for k in r), sum(pick[k] for k in r)) for r in routes]
        # first-fit decreasing into truck-sized bundles
        bins: list[list[float]] = []
        for dl, pk in sorted(loads, reverse=True):
            if dl > ctx.q1 + EPS or pk > ctx.q1 + EPS:
                return None
            for b in bins:
                if b[0] + dl <= ctx.q1 + EPS and b[1] + pk <= ctx.q1 + EPS:
                    b[0] += dl
                    b[1] += pk
                    break
            else:
                bins.append([dl, pk])
        if len(bins) > ctx.sat_limit[sat]:
            return None
        for dl, pk in bins:
            bundles.append(Truck(ctx.sat_depot[sat], [sat], [dl], [pk]))
    trucks = bundles
    d = ctx.d
    savings = []
    for a in range(len(trucks)):
        for b in range(a + 1, len(trucks)):
            ta, tb = trucks[a], trucks[b]
            if ta.depot != tb.depot or ta.stops[0] == tb.stops[0]:
                continue
            dep, i, j = ta.depot, ta.stops[0], tb.stops[0]
            savings.append((d[dep][i] + d[dep][j] - d[i][j] + ctx.c_lv, a, b))
    savings.sort(key=lambda x: (-x[0], x[1], x[2]))
    owner = list(range(len(trucks)))
    routes = {k: trucks[k] for k in range(len(trucks))}

    def find(k):
        while owner[k] != k:
            owner[k] = owner[owner[k]]
            k = owner[k]
        return k

    for sv, a, b in savings:
        if sv <= EPS:
            break
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        A, Bt = routes[ra], routes[rb]
        i, j = trucks[a].stops[0], trucks[b].stops[0]
        if set(A.stops) & set(Bt.stops):
            continue
        merged = None
        for X, Y in ((A, Bt), (Bt, A)):
            for rx in (False, True):
                for ry in (False, True):
                    xs = _rev(X) if rx else X
                    ys = _rev(Y) if ry else Y
                    if not ({xs.stops[-1], ys.stops[0]} == {i, j}):
                        continue
                    cand = Truck(X.depot, xs.stops + ys.stops,
                                 xs.delivered + ys.delivered, xs.picked + ys.picked)
                    if _truck_ok(ctx, cand, latest):
                        if merged is None or truck_dist(ctx, cand) < truck_dist(ctx, merged) - EPS:
                            merged = cand
        if merged is None:
            continue
        owner[rb] = ra
        routes[ra] = merged
        del routes[rb]
    out = [routes[k] for k in sorted(routes)]
    for tr in out:
        if not _truck_ok(ctx, tr, latest):
            return None
    return out


def _rev(tr: Truck) -> Truck:
    return Truck(tr.depot, tr.stops[::-1], tr.delivered[::-1], tr.picked[::-1])


def trucks_cost(ctx: Ctx, trucks: list[Truck]) -> float:
    return sum(truck_dist(ctx, tr) + ctx.c_lv for tr in trucks)


def plan_cost(ctx: Ctx, plan: Plan, trucks: list[Truck] | None = None) -> float:
    if trucks is None:
        trucks = build_trucks(ctx, plan)
        if trucks is None:
            return math.inf
    return ctx.ev_cost(plan) + trucks_cost(ctx, trucks)


def to_solution(ctx: Ctx, plan: Plan, trucks: list[Truck]) -> Solution:
    nodes = ctx.inst.nodes
    routes = []
    for tr in trucks:
        dep = nodes[tr.depot].id
        stops = [dep] + [nodes[s].id for s in tr.stops] + [dep]
        routes.append(Route(1, tuple(stops), [0.0] + tr.delivered + [0.0],
                            [0.0] + tr.picked + [0.0]))
    assignment = {}
    for sat in sorted(plan):
        sid = nodes[sat].id
        for seq in plan[sat]:
            if not seq:
                continue
            routes.append(Route(2, tuple([sid] + [nodes[k].id for k in seq] + [sid])))
            for k in seq:
                if ctx.is_customer[k]:
                    assignment[nodes[k].id] = sid
    return Solution(tuple(routes), assignment)


def from_solution(ctx: Ctx, sol: Solution) -> Plan:
    inst = ctx.inst
    plan: Plan = {s: [] for s in ctx.sats}
    for r in sol.second_echelon:
        sat = inst.idx(r.origin)
        plan.setdefault(sat, []).append([inst.idx(k) for k in r.inner])
    return plan


def copy_plan(plan: Plan) -> Plan:
    return {s: [list(r) for r in routes] for s, routes in plan.items()}


def _pareto(labels, tw: bool, cap: int = 40):
    """Non-dominated labels in (distance, -charge, time), at most ``cap``."""
    labels.sort(key=lambda lb: (lb[0], lb[1], lb[2], len(lb[3])))
    kept = []
    for lb in labels:
        dominated = False
        for o in kept:
            if o[1] <= lb[1] + EPS and (not tw or o[2] <= lb[2] + EPS):
                dominated = True
                break
        if not dominated:
            kept.append(lb)
            if len(kept) >= cap:
                break
    return kept
