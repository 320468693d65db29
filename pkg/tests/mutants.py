"""Single-violation mutants of feasible solutions.

Each mutator takes a feasible (instance, solution) pair and returns a pair in
which one constraint family is broken, or None when the solution offers no
handle for that family. Some mutate the instance (tighter capacity, shorter
window) rather than the routes; the validator decides whether the result
really breaks exactly one family.
"""

from __future__ import annotations

import random
from dataclasses import replace

from evrp2e.instance import Instance, NodeRole, Variant
from evrp2e.solution import Route, Solution, evaluate, resolve_amounts

# validator family -> model row families that must register the violation
ROW_FAMILIES = {
    "2": {"c2", "c3"},
    "4": {"c4", "c7"},
    "5": {"c4", "c5", "c6"},
    "8": {"c8", "c10"},
    "9": {"c9"},
    "11": {"c11"},
    "12-14": {"c12", "c13", "c14"},
    "15-17": {"c15", "c16", "c17"},
    "18-20": {"c18", "c19", "c20"},
    "spd7": {"spd7"},
    "tw3": {"tw3"},
    "tw6": {"tw4", "tw6"},
}


def _fleet(inst: Instance, **kw) -> Instance:
    return replace(inst, fleet=replace(inst.fleet, **kw))


def _implicit(sol: Solution) -> Solution:
    """Drop explicit truck amounts so they follow the assignment."""
    routes = tuple(r if r.echelon == 2 else Route(1, r.stops) for r in sol.routes)
    return Solution(routes, sol.assignment)


def _ev_load(inst, r) -> float:
    return sum(inst.node(s).delivery for s in r.inner)


def _with_node(inst, node_id, **kw) -> Instance:
    nodes = tuple(replace(n, **kw) if n.id == node_id else n for n in inst.nodes)
    return replace(inst, nodes=nodes)


def truck_capacity(inst, sol, rng):
    loads = [sum(r.delivered) for r in resolve_amounts(inst, sol).first_echelon]
    return _fleet(inst, q1=max(loads) - rng.choice([1, 2, 5])), sol


def ev_capacity(inst, sol, rng):
    worst = max(_ev_load(inst, r) for r in sol.second_echelon)
    return _fleet(inst, q2=worst - rng.choice([1, 2, 5])), sol


def ev_combined_load(inst, sol, rng):
    if inst.variant is not Variant.SPD:
        return None
    r = rng.choice(sol.second_echelon)
    custs = [s for s in r.inner if inst.node(s).role is NodeRole.CUSTOMER]
    others = sum(inst.node(c).pickup for c in custs[:-1])
    pick = inst.fleet.q2 - others + rng.choice([1, 3, 8])
    return _with_node(inst, custs[-1], pickup=pick), _implicit(sol)


def battery(inst, sol, rng):
    return _fleet(inst, battery=inst.fleet.battery * rng.uniform(0.3, 0.9)), sol


def due_time(inst, sol, rng):
    if inst.variant is not Variant.TW:
        return None
    ev = evaluate(inst, sol)
    stops = [t for tr, r in zip(ev.traces, sol.routes) if r.echelon == 2 for t in tr[1:-1]
             if inst.node(t.node).role is NodeRole.CUSTOMER]
    t = rng.choice(stops)
    if t.arrival < 1:
        return None
    # the EV may wait at the customer, so the window moves below the arrival
    due = t.arrival - rng.uniform(0.5, min(5.0, t.arrival))
    ready = min(inst.node(t.node).ready, due)
    return _with_node(inst, t.node, ready=ready, due=due), sol


def early_start(inst, sol, rng):
    if inst.variant is not Variant.TW:
        return None
    ev = evaluate(inst, sol)
    k = rng.choice([i for i, r in enumerate(sol.routes) if r.echelon == 2])
    start = ev.traces[k][0].start
    if start is None or start < 1:
        return None
    routes = list(sol.routes)
    routes[k] = replace(routes[k], start_time=start - rng.uniform(0.5, min(start, 20.0)))
    return inst, Solution(tuple(routes), sol.assignment)


def double_visit(inst, sol, rng):
    evs = [i for i, r in enumerate(sol.routes) if r.echelon == 2]
    k = rng.choice(evs)
    r = sol.routes[k]
    c = rng.choice([s for s in r.inner if inst.node(s).role is NodeRole.CUSTOMER])
    routes = list(sol.routes)
    others = [i for i in evs if i != k]
    if others:
        j = rng.choice(others)
        stops = list(routes[j].stops)
        stops.insert(rng.randrange(1, len(stops)), c)
        routes[j] = replace(routes[j], stops=tuple(stops))
    else:
        stops = list(r.stops)
        pos = stops.index(c)
        spots = [p for p in range(1, len(stops)) if p not in (pos, pos + 1)]
        if not spots:
            return None
        stops.insert(rng.choice(spots), c)
        routes[k] = replace(r, stops=tuple(stops))
    return inst, Solution(tuple(routes), sol.assignment)


def unassigned(inst, sol, rng):
    a = dict(sol.assignment)
    del a[rng.choice(sorted(a))]
    return inst, Solution(_implicit(sol).routes, a)


def excess_delivery(inst, sol, rng):
    sol = resolve_amounts(inst, sol)
    k = rng.choice([i for i, r in enumerate(sol.routes) if r.echelon == 1])
    r = sol.routes[k]
    d = list(r.delivered)
    d[rng.randrange(1, len(d) - 1)] += rng.choice([1, 3, 7])
    routes = list(sol.routes)
    routes[k] = replace(r, delivered=tuple(d))
    return inst, Solution(tuple(routes), sol.assignment)


def foreign_assignment(inst, sol, rng):
    sats = [inst.nodes[s].id for s in inst.satellites]
    if len(sats) < 2:
        return None
    a = dict(sol.assignment)
    c = rng.choice(sorted(a))
    a[c] = rng.choice([s for s in sats if s != a[c]])
    return inst, Solution(_implicit(sol).routes, a)


def station_limit(inst, sol, rng):
    counts: dict[str, int] = {}
    for r in sol.second_echelon:
        for s in r.inner:
            if inst.node(s).role is NodeRole.STATION:
                counts[s] = counts.get(s, 0) + 1
    top = max(counts.values(), default=0)
    if top < 2:
        return None
    return replace(inst, station_copies=top - 1), sol


def satellite_limit(inst, sol, rng):
    """Split a truck visit over two trucks, then allow one visit less."""
    sol = resolve_amounts(inst, sol)
    by_sat: dict[str, list[Route]] = {}
    for r in sol.second_echelon:
        by_sat.setdefault(r.origin, []).append(r)
    multi = sorted(s for s, rs in by_sat.items() if len(rs) >= 2)
    if not multi:
        return None
    s = rng.choice(multi)
    first = by_sat[s][0]
    spd = inst.variant is Variant.SPD
    part = sum(inst.node(c).delivery for c in first.inner)
    back = sum(inst.node(c).pickup for c in first.inner) if spd else 0.0
    routes = []
    for r in sol.routes:
        if r.echelon == 1 and s in r.inner:
            d, p = list(r.delivered), list(r.picked_up)
            k = r.stops.index(s)
            d[k] -= part
            p[k] -= back
            routes.append(replace(r, delivered=tuple(d), picked_up=tuple(p)))
            routes.append(Route(1, (r.stops[0], s, r.stops[0]), (0, part, 0), (0, back, 0)))
        else:
            routes.append(r)
    visits = sum(1 for r in routes if r.echelon == 1 for x in r.inner if x == s)
    return replace(inst, satellite_copies=visits - 1), Solution(tuple(routes), sol.assignment)


MUTATORS = {
    "2": satellite_limit, "4": excess_delivery, "5": truck_capacity, "8": double_visit,
    "9": station_limit, "11": unassigned, "12-14": foreign_assignment, "15-17": ev_capacity,
    "18-20": battery, "spd7": ev_combined_load, "tw3": early_start, "tw6": due_time,
}


def single_violation(inst, sol, family: str, rng: random.Random):
    """Mutant breaking exactly ``family`` according to the validator, or None."""
    try:
        out = MUTATORS[family](inst, sol, rng)
    except (ValueError, IndexError):
        return None
    if out is None:
        return None
    try:
        found = {v.family for v in evaluate(*out).violations}
    except ValueError:
        return None
    return out if found == {family} else None
