"""Hand-built micro instances for unit tests."""

from __future__ import annotations

import math

from evrp2e.instance import Fleet, Instance, Node, NodeRole, Variant


def make(customers=(), *, depot=(0.0, 0.0), satellites=((10.0, 0.0),), stations=(),
         q1=100.0, q2=50.0, battery=100.0, h=1.0, g=1.0, variant=Variant.BASE,
         cost_lv=0.0, cost_ev=0.0, policy=None, horizon=math.inf, sat_copies=4, sta_copies=3):
    """``customers`` holds tuples (x, y, delivery[, pickup[, ready, due[, service]]])."""
    nodes = [Node("D0", NodeRole.DEPOT, *depot, due=horizon)]
    for k, (x, y) in enumerate(satellites, 1):
        nodes.append(Node(f"S{k}", NodeRole.SATELLITE, x, y, due=horizon))
    for k, (x, y) in enumerate(stations, 1):
        nodes.append(Node(f"F{k}", NodeRole.STATION, x, y, due=horizon))
    for k, spec in enumerate(customers, 1):
        x, y, d = spec[:3]
        p = spec[3] if len(spec) > 3 else 0.0
        ready, due = spec[4:6] if len(spec) > 5 else (0.0, horizon)
        service = spec[6] if len(spec) > 6 else 0.0
        nodes.append(Node(f"C{k}", NodeRole.CUSTOMER, x, y, d, p, ready, due, service))
    fleet = Fleet(q1, q2, battery, h, g, cost_lv, cost_ev)
    return Instance("tiny", tuple(nodes), fleet, Variant(variant), sat_copies, sta_copies,
                    distance_policy=policy)
