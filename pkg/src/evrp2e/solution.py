"""Two-echelon solutions, objective evaluation and constraint validation.

Routes refer to node ids of the instance they were built for. On an
unexpanded instance a satellite may take up to ``satellite_copies`` truck
visits and a station up to ``station_copies`` EV visits; on an expanded
instance every copy is its own node with a single visit.

Echelon-1 routes carry the cargo dropped (``delivered``) and collected
(``picked_up``) at every stop. When omitted they are derived from the
assignment, which is only possible while each satellite gets one truck visit.
Echelon-2 stops always deliver and collect the full customer demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from .instance import Instance, NodeRole, Variant

EPS = 1e-6


class StructurallyInvalid(ValueError):
    pass


class VariantMismatch(ValueError):
    pass


class Violation(NamedTuple):
    kind: str
    family: str  # equation family of the model, e.g. "5", "12-14", "tw3", "spd7"
    where: str
    magnitude: float


@dataclass(frozen=True)
class Route:
    echelon: int
    stops: tuple[str, ...]
    delivered: tuple[float, ...] = ()
    picked_up: tuple[float, ...] = ()
    start_time: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "stops", tuple(self.stops))
        object.__setattr__(self, "delivered", tuple(float(v) for v in self.delivered))
        object.__setattr__(self, "picked_up", tuple(float(v) for v in self.picked_up))
        if self.echelon not in (1, 2):
            raise StructurallyInvalid(f"echelon must be 1 or 2, got {self.echelon}")
        if len(self.stops) < 2:
            raise StructurallyInvalid("a route needs at least its two endpoints")
        for name in ("delivered", "picked_up"):
            vals = getattr(self, name)
            if vals and len(vals) != len(self.stops):
                raise StructurallyInvalid(f"{name} must align with stops")

    @property
    def origin(self) -> str:
        return self.stops[0]

    @property
    def inner(self) -> tuple[str, ...]:
        return self.stops[1:-1]

    def arcs(self) -> Iterable[tuple[str, str]]:
        return zip(self.stops, self.stops[1:])


@dataclass(frozen=True)
class Solution:
    routes: tuple[Route, ...]
    assignment: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(self.routes))
        object.__setattr__(self, "assignment", dict(self.assignment))

    @property
    def first_echelon(self) -> list[Route]:
        return [r for r in self.routes if r.echelon == 1]

    @property
    def second_echelon(self) -> list[Route]:
        return [r for r in self.routes if r.echelon == 2]

    def canonical(self) -> "Solution":
        """Same solution with routes in a deterministic order."""
        routes = sorted(self.routes, key=lambda r: (r.echelon, r.stops, r.delivered, r.picked_up))
        return Solution(tuple(routes), dict(sorted(self.assignment.items())))


class StopTrace(NamedTuple):
    node: str
    arrival: float | None
    start: float | None
    battery_arrival: float | None
    battery_departure: float | None
    load_delivery: float
    load_pickup: float


@dataclass(frozen=True)
class Evaluation:
    total_distance: float
    vehicle_cost: float
    objective: float
    violations: tuple[Violation, ...]
    traces: tuple[tuple[StopTrace, ...], ...]
    n_trucks: int
    n_evs: int

    @property
    def feasible(self) -> bool:
        return not self.violations


# --- structure ----------------------------------------------------------------

def check_structure(inst: Instance, sol: Solution) -> None:
    """Raise :class:`StructurallyInvalid` if any route breaks the route invariants."""
    for r in sol.routes:
        try:
            nodes = [inst.node(s) for s in r.stops]
        except KeyError as exc:
            raise StructurallyInvalid(str(exc)) from None
        first, last = nodes[0], nodes[-1]
        if first.physical != last.physical:
            raise StructurallyInvalid(f"route {r.stops} does not return to {first.id}")
        if r.echelon == 1:
            if first.role is not NodeRole.DEPOT:
                raise StructurallyInvalid(f"truck route {r.stops} must start at a depot")
            bad = [n.id for n in nodes[1:-1] if n.role is not NodeRole.SATELLITE]
        else:
            if first.role is not NodeRole.SATELLITE:
                raise StructurallyInvalid(f"EV route {r.stops} must start at a satellite")
            bad = [n.id for n in nodes[1:-1]
                   if n.role not in (NodeRole.STATION, NodeRole.CUSTOMER)]
        if bad:
            raise StructurallyInvalid(f"route {r.stops} visits {bad} on the wrong echelon")
    for cust, sat in sol.assignment.items():
        try:
            c, s = inst.node(cust), inst.node(sat)
        except KeyError as exc:
            raise StructurallyInvalid(str(exc)) from None
        if c.role is not NodeRole.CUSTOMER or s.role is not NodeRole.SATELLITE:
            raise StructurallyInvalid(f"assignment {cust}->{sat} is not customer->satellite")


def satellite_loads(inst: Instance, assignment: Mapping[str, str]) -> dict[str, tuple[float, float]]:
    """Satellite id -> (delivery, pickup) totals of the customers assigned to it."""
    loads = {inst.nodes[s].id: (0.0, 0.0) for s in inst.satellites}
    for cust, sat in assignment.items():
        n = inst.node(cust)
        d, p = loads.get(sat, (0.0, 0.0))
        loads[sat] = (d + n.delivery, p + n.pickup)
    return loads


def resolve_amounts(inst: Instance, sol: Solution) -> Solution:
    """Fill in missing echelon-1 delivered/picked_up amounts from the assignment."""
    trucks = sol.first_echelon
    if all(r.delivered and r.picked_up for r in trucks):
        return sol
    visits: dict[str, int] = {}
    for r in trucks:
        for s in r.inner:
            visits[s] = visits.get(s, 0) + 1
    loads = satellite_loads(inst, sol.assignment)
    spd = inst.variant is Variant.SPD
    routes = []
    for r in sol.routes:
        if r.echelon == 2 or (r.delivered and r.picked_up):
            routes.append(r)
            continue
        delivered, picked = list(r.delivered), list(r.picked_up)
        if not delivered or not picked:
            for s in r.inner:
                if visits[s] > 1:
                    raise StructurallyInvalid(
                        f"satellite {s} has {visits[s]} truck visits; amounts must be explicit")
        if not delivered:
            delivered = [0.0] + [loads.get(s, (0.0, 0.0))[0] for s in r.inner] + [0.0]
        if not picked:
            picked = [0.0] + [loads.get(s, (0.0, 0.0))[1] if spd else 0.0 for s in r.inner] + [0.0]
        routes.append(Route(1, r.stops, delivered, picked, r.start_time))
    return Solution(tuple(routes), sol.assignment)


# --- simulation ---------------------------------------------------------------

def _truck_trace(inst: Instance, r: Route) -> list[StopTrace]:
    tt = inst.travel_time
    idx = [inst.idx(s) for s in r.stops]
    delivered = r.delivered or (0.0,) * len(idx)
    picked = r.picked_up or (0.0,) * len(idx)
    u = sum(delivered)
    v = 0.0
    t = 0.0
    out = [StopTrace(r.stops[0], 0.0, 0.0, None, None, u, v)]
    for k in range(1, len(idx)):
        t += inst.nodes[idx[k - 1]].service + tt[idx[k - 1]][idx[k]]
        u -= delivered[k]
        v += picked[k]
        out.append(StopTrace(r.stops[k], t, t, None, None, u, v))
    return out


def _ev_trace(inst: Instance, r: Route, start: float, with_pickups: bool) -> list[StopTrace]:
    f = inst.fleet
    dist, tt = inst.dist, inst.travel_time
    idx = [inst.idx(s) for s in r.stops]
    nodes = inst.nodes
    u = sum(nodes[i].delivery for i in idx[1:-1] if nodes[i].role is NodeRole.CUSTOMER)
    v = 0.0
    bsc = f.battery
    sat = nodes[idx[0]]
    out = [StopTrace(r.stops[0], start, start, None, bsc, u, v)]
    depart = start + sat.service
    for k in range(1, len(idx)):
        i, j = idx[k - 1], idx[k]
        n = nodes[j]
        arrival = depart + tt[i][j]
        bsc_a = bsc - f.consumption * dist[i][j]
        if k == len(idx) - 1:
            out.append(StopTrace(n.id, arrival, arrival, bsc_a, None, u, v))
            break
        if n.role is NodeRole.CUSTOMER:
            begin = max(arrival, n.ready)
            depart = begin + n.service
            u -= n.delivery
            if with_pickups:
                v += n.pickup
            bsc = bsc_a
        else:
            begin = arrival
            depart = arrival + n.service + f.charging_rate * max(0.0, f.battery - bsc_a)
            bsc = f.battery
        out.append(StopTrace(n.id, arrival, begin, bsc_a, bsc, u, v))
    return out


def _satellite_ready(inst: Instance, sol: Solution) -> dict[str, float]:
    ready: dict[str, float] = {}
    for r in sol.first_echelon:
        for tr in _truck_trace(inst, r)[1:-1]:
            ready[tr.node] = max(ready.get(tr.node, 0.0), tr.arrival)
    return ready


# --- checks ---------------------------------------------------------------------

def _split_matches(groups: list[tuple[float, float]], targets: list[tuple[float, float]]) -> bool:
    """Can route loads be partitioned into bins with exactly the target sums?"""
    groups = sorted(groups, reverse=True)
    n = len(targets)
    seen: set = set()

    def rec(k: int, remaining: tuple) -> bool:
        if k == len(groups):
            return all(abs(a) < EPS and abs(b) < EPS for a, b in remaining)
        key = (k, tuple(sorted((round(a, 6), round(b, 6)) for a, b in remaining)))
        if key in seen:
            return False
        seen.add(key)
        d, p = groups[k]
        for b in range(n):
            a_rem, p_rem = remaining[b]
            if d <= a_rem + EPS and p <= p_rem + EPS:
                nxt = list(remaining)
                nxt[b] = (a_rem - d, p_rem - p)
                if rec(k + 1, tuple(nxt)):
                    return True
        return False

    return rec(0, tuple(targets))


def check_first_echelon(inst: Instance, sol: Solution) -> list[Violation]:
    sol = resolve_amounts(inst, sol)
    out: list[Violation] = []
    q1 = inst.fleet.q1
    visits: dict[str, list[tuple[float, float]]] = {}
    for r in sol.first_echelon:
        for k, s in enumerate(r.stops):
            if k in (0, len(r.stops) - 1):
                continue
            visits.setdefault(s, []).append((r.delivered[k], r.picked_up[k]))
            if r.delivered[k] < -EPS or r.picked_up[k] < -EPS:
                out.append(Violation("NegativeDelivery", "5", s, -min(r.delivered[k], r.picked_up[k])))
        load = sum(r.delivered)
        if load > q1 + EPS:
            out.append(Violation("CapacityViolation", "5", r.stops[0], load - q1))
    limits = inst.visit_limit
    loads = satellite_loads(inst, sol.assignment)
    for s_idx in inst.satellites:
        s = inst.nodes[s_idx].id
        got = visits.get(s, [])
        if len(got) > limits[s_idx]:
            out.append(Violation("SatelliteOverVisit", "2", s, len(got) - limits[s_idx]))
        need = loads[s][0]
        delivered = sum(d for d, _ in got)
        if delivered < need - EPS:
            out.append(Violation("DemandShortfall", "4", s, need - delivered))
        elif delivered > need + EPS:
            out.append(Violation("DemandExcess", "4", s, delivered - need))
        elif len(got) > 1:
            spd = inst.variant is Variant.SPD
            groups = []
            for r in sol.second_echelon:
                if r.origin == s:
                    nodes = [inst.node(c) for c in r.inner]
                    groups.append((sum(n.delivery for n in nodes),
                                   sum(n.pickup for n in nodes) if spd else 0.0))
            targets = [(d, p if spd else 0.0) for d, p in got]
            if not _split_matches(groups, targets):
                out.append(Violation("CopySplitMismatch", "4", s, 1.0))
    return out


def check_second_echelon(inst: Instance, sol: Solution, with_pickups: bool = False) -> list[Violation]:
    out: list[Violation] = []
    q2 = inst.fleet.q2
    counts: dict[str, int] = {}
    for r in sol.second_echelon:
        sat = r.origin
        for s in r.inner:
            counts[s] = counts.get(s, 0) + 1
            n = inst.node(s)
            if n.role is NodeRole.CUSTOMER and sol.assignment.get(s, sat) != sat:
                out.append(Violation("AssignmentMismatch", "12-14", s, 1.0))
        trace = _ev_trace(inst, r, 0.0, with_pickups)
        worst_u = max(tr.load_delivery for tr in trace[:-1]) if len(trace) > 1 else 0.0
        worst = max(tr.load_delivery + tr.load_pickup for tr in trace[:-1]) if len(trace) > 1 else 0.0
        if worst_u > q2 + EPS:
            out.append(Violation("EvCapacity", "15-17", sat, worst_u - q2))
        elif worst > q2 + EPS:
            out.append(Violation("EvCapacity", "spd7", sat, worst - q2))
    for c in inst.customers:
        cid = inst.nodes[c].id
        seen = counts.get(cid, 0)
        if seen == 0:
            out.append(Violation("Unvisited", "8", cid, 1.0))
        elif seen > 1:
            out.append(Violation("MultiVisit", "8", cid, seen - 1.0))
        if cid not in sol.assignment:
            out.append(Violation("Unassigned", "11", cid, 1.0))
    limits = inst.visit_limit
    for f_idx in inst.stations:
        fid = inst.nodes[f_idx].id
        if counts.get(fid, 0) > limits[f_idx]:
            out.append(Violation("StationOverVisit", "9", fid, counts[fid] - limits[f_idx]))
    return out


def check_battery(inst: Instance, sol: Solution) -> list[Violation]:
    out: list[Violation] = []
    for r in sol.second_echelon:
        worst = 0.0
        where = None
        for tr in _ev_trace(inst, r, 0.0, False)[1:]:
            if tr.battery_arrival < worst:
                worst, where = tr.battery_arrival, tr.node
            if inst.node(tr.node).role is NodeRole.STATION:
                if where is not None and worst < -EPS:
                    out.append(Violation("BatteryViolation", "18-20", where, -worst))
                worst, where = 0.0, None
        if where is not None and worst < -EPS:
            out.append(Violation("BatteryViolation", "18-20", where, -worst))
    return out


def check_time_windows(inst: Instance, sol: Solution) -> list[Violation]:
    if inst.variant is not Variant.TW:
        raise VariantMismatch("time windows are only checked on TW instances")
    out: list[Violation] = []
    ready = _satellite_ready(inst, resolve_amounts(inst, sol))
    for r in sol.second_echelon:
        sat_ready = ready.get(r.origin, 0.0)
        start = sat_ready if r.start_time is None else r.start_time
        if start < sat_ready - EPS:
            out.append(Violation("SyncViolation", "tw3", r.origin, sat_ready - start))
        for tr in _ev_trace(inst, r, start, False)[1:-1]:
            n = inst.node(tr.node)
            if n.role is NodeRole.CUSTOMER and tr.start > n.due + EPS:
                out.append(Violation("TimeWindowViolation", "tw6", n.id, tr.start - n.due))
    return out


def check_spd(inst: Instance, sol: Solution) -> list[Violation]:
    """SPD load checks: EV delivery+pickup load and truck pickup handling."""
    if inst.variant is not Variant.SPD:
        raise VariantMismatch("pickup checks only apply to SPD instances")
    out = check_second_echelon(inst, sol, with_pickups=True)
    sol = resolve_amounts(inst, sol)
    q1 = inst.fleet.q1
    collected: dict[str, float] = {}
    for r in sol.first_echelon:
        worst = 0.0
        for tr in _truck_trace(inst, r)[:-1]:
            if tr.load_delivery <= q1 + EPS:
                worst = max(worst, tr.load_delivery + tr.load_pickup - q1)
        if worst > EPS:
            out.append(Violation("TruckPickupCapacity", "spd3", r.stops[0], worst))
        for k, s in enumerate(r.inner, 1):
            collected[s] = collected.get(s, 0.0) + r.picked_up[k]
    for s, (_, need) in satellite_loads(inst, sol.assignment).items():
        got = collected.get(s, 0.0)
        if abs(got - need) > EPS:
            out.append(Violation("PickupMismatch", "spd4", s, abs(got - need)))
    return out


def route_distance(inst: Instance, r: Route) -> float:
    d = inst.dist
    idx = [inst.idx(s) for s in r.stops]
    return sum(d[a][b] for a, b in zip(idx, idx[1:]))


def evaluate(inst: Instance, sol: Solution) -> Evaluation:
    check_structure(inst, sol)
    sol = resolve_amounts(inst, sol)
    violations = check_first_echelon(inst, sol)
    if inst.variant is Variant.SPD:
        violations += check_spd(inst, sol)
    else:
        violations += check_second_echelon(inst, sol)
    violations += check_battery(inst, sol)
    if inst.variant is Variant.TW:
        violations += check_time_windows(inst, sol)

    ready = _satellite_ready(inst, sol)
    traces = []
    for r in sol.routes:
        if r.echelon == 1:
            traces.append(tuple(_truck_trace(inst, r)))
        else:
            start = ready.get(r.origin, 0.0) if r.start_time is None else r.start_time
            traces.append(tuple(_ev_trace(inst, r, start, inst.variant is Variant.SPD)))
    n1 = len(sol.first_echelon)
    n2 = len(sol.second_echelon)
    total = sum(route_distance(inst, r) for r in sol.routes)
    vehicle = inst.fleet.cost_lv * n1 + inst.fleet.cost_ev * n2
    return Evaluation(total, vehicle, total + vehicle, tuple(violations), tuple(traces), n1, n2)


def is_feasible(inst: Instance, sol: Solution) -> bool:
    return evaluate(inst, sol).feasible


# --- copies -----------------------------------------------------------------------

def collapse_copies(inst: Instance, sol: Solution) -> Solution:
    """Map a solution over copy ids back to physical ids.

    ``inst`` is the expanded instance the solution refers to.
    """
    phys = {n.id: n.physical for n in inst.nodes}
    routes = []
    for r in sol.routes:
        stops = tuple(phys[s] for s in r.stops)
        routes.append(Route(r.echelon, stops, r.delivered, r.picked_up, r.start_time))
    assignment = {c: phys[s] for c, s in sol.assignment.items()}
    return Solution(tuple(routes), assignment)


# --- serialization ----------------------------------------------------------------

def solution_to_dict(sol: Solution, instance_name: str | None = None) -> dict:
    routes = []
    for r in sol.routes:
        rec: dict = {"echelon": r.echelon, "stops": list(r.stops)}
        if r.delivered:
            rec["delivered"] = list(r.delivered)
        if r.picked_up:
            rec["picked_up"] = list(r.picked_up)
        if r.start_time is not None:
            rec["start_time"] = r.start_time
        routes.append(rec)
    out: dict = {}
    if instance_name:
        out["instance"] = instance_name
    out["routes"] = routes
    out["assignment"] = dict(sorted(sol.assignment.items()))
    return out


def solution_from_dict(data: dict) -> Solution:
    try:
        routes = tuple(
            Route(int(rec["echelon"]), tuple(rec["stops"]), tuple(rec.get("delivered", ())),
                  tuple(rec.get("picked_up", ())), rec.get("start_time"))
            for rec in data["routes"]
        )
        return Solution(routes, dict(data.get("assignment", {})))
    except (KeyError, TypeError) as exc:
        raise StructurallyInvalid(f"bad solution document: {exc}") from None


def dumps_solution(sol: Solution, instance_name: str | None = None) -> str:
    return json.dumps(solution_to_dict(sol, instance_name), indent=2) + "\n"


def loads_solution(text: str) -> Solution:
    return solution_from_dict(json.loads(text))


def write_solution(sol: Solution, path: str | Path, instance_name: str | None = None) -> None:
    Path(path).write_text(dumps_solution(sol, instance_name))


def read_solution(path: str | Path) -> Solution:
    return loads_solution(Path(path).read_text())
