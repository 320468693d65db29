"""Deterministic synthetic instances named after the public benchmark families.

The public two-echelon EVRP files are not bundled; these stand-ins follow the
Solomon-style families (clustered ``C``, random ``R``, mixed ``RC``; horizon
class 1 short, 2 long) and the size classes of the benchmark names:

* ``<fam>_C5x`` / ``<fam>_C5``: 5 customers, 1 satellite
* ``<fam>_C10x`` / ``<fam>_C10``: 10 customers, 1 satellite
* ``<fam>_C15x`` / ``<fam>_C15``: 15 customers, 2 satellites
* ``<fam>_21x`` / ``<fam>_C21``: 100 customers, 8 satellites, 21 stations

Every instance is seeded from the CRC32 of its name, so regeneration is
byte-identical.
"""

from __future__ import annotations

import math
import random
import re
import zlib
from dataclasses import replace

from .instance import Fleet, Instance, Node, NodeRole, Variant, dumps_instance

HORIZON = {("C", 1): 1236.0, ("C", 2): 3390.0, ("R", 1): 230.0, ("R", 2): 1000.0,
           ("RC", 1): 240.0, ("RC", 2): 960.0}
SERVICE = {"C": 90.0, "R": 10.0, "RC": 10.0}

# (customers, satellites, stations)
SIZES = {"5": (5, 1, 3), "10": (10, 1, 3), "15": (15, 2, 4), "21": (100, 8, 21)}

_NAME = re.compile(r"^(RC|C|R)([12])(\d\d)_(?:C)?(5|10|15|21)x?$")


def parse_name(name: str) -> tuple[str, int, int, int, int]:
    """-> (family, horizon class, customers, satellites, stations)."""
    m = _NAME.match(name)
    if not m:
        raise ValueError(f"not a benchmark-style name: {name!r}")
    fam, cls, _, size = m.groups()
    n, ns, nf = SIZES[size]
    return fam, int(cls), n, ns, nf


def _seed(name: str) -> int:
    return zlib.crc32(name.encode())


def _ceil10(x: float) -> float:
    return float(math.ceil(x / 10.0) * 10)


def _coords(rng: random.Random, fam: str, n: int) -> list[tuple[float, float]]:
    pts = []
    if fam in ("C", "RC"):
        n_clustered = n if fam == "C" else n // 2
        k = max(1, round(n_clustered / 5))
        centers = [(rng.uniform(15, 85), rng.uniform(15, 85)) for _ in range(k)]
        for i in range(n_clustered):
            cx, cy = centers[i % k]
            pts.append((round(min(100, max(0, rng.gauss(cx, 6)))),
                        round(min(100, max(0, rng.gauss(cy, 6))))))
    while len(pts) < n:
        pts.append((rng.randint(0, 100), rng.randint(0, 100)))
    return [(float(x), float(y)) for x, y in pts]


def _satellites(rng, depot, custs, ns):
    if ns == 1:
        cx = sum(p[0] for p in custs) / len(custs)
        cy = sum(p[1] for p in custs) / len(custs)
        return [(round(depot[0] + 0.6 * (cx - depot[0]) + rng.uniform(-3, 3)),
                 round(depot[1] + 0.6 * (cy - depot[1]) + rng.uniform(-3, 3)))]
    out = []
    phase = rng.uniform(0, 2 * math.pi)
    radius = 14 if ns <= 2 else 27
    for k in range(ns):
        a = phase + 2 * math.pi * k / ns
        r = radius + rng.uniform(-4, 4)
        out.append((round(min(100, max(0, depot[0] + r * math.cos(a)))),
                    round(min(100, max(0, depot[1] + r * math.sin(a))))))
    return out


def _windows(rng, fam, cls, horizon, service, earliest, back):
    """Customer window containing at least one reachable service start."""
    width = horizon * (rng.uniform(0.06, 0.16) if cls == 1 else rng.uniform(0.2, 0.45))
    latest_start = horizon - service - back
    lo = earliest
    hi = max(lo, latest_start - width / 2)
    center = rng.uniform(lo, hi) if hi > lo else lo
    ready = max(0.0, round(center - width / 2))
    due = round(center + width / 2)
    if due < earliest:
        ready, due = round(earliest), round(earliest + width)
    due = min(max(due, math.ceil(earliest)), max(latest_start, math.ceil(earliest)))
    return float(min(ready, due)), float(due)


def generate(name: str, battery_scale: float = 1.0) -> Instance:
    fam, cls, n, ns, nf = parse_name(name)
    rng = random.Random(_seed(name))
    horizon = HORIZON[(fam, cls)]
    service = SERVICE[fam]
    depot = (40.0, 50.0) if fam != "R" else (35.0, 35.0)
    custs = _coords(rng, fam, n)
    sats = [(float(x), float(y)) for x, y in _satellites(rng, depot, custs, ns)]

    def near(p):
        return min(sats, key=lambda s: math.dist(s, p))

    reach = max(math.dist(near(p), p) for p in custs)
    stations = []
    for _ in range(nf):
        if custs and rng.random() < 0.7:
            # between a random customer and its satellite
            c = rng.choice(custs)
            s = near(c)
            w = rng.uniform(0.3, 0.7)
            p = (s[0] + w * (c[0] - s[0]) + rng.uniform(-8, 8),
                 s[1] + w * (c[1] - s[1]) + rng.uniform(-8, 8))
        else:
            p = (rng.uniform(0, 100), rng.uniform(0, 100))
        stations.append((float(round(min(100, max(0, p[0])))), float(round(min(100, max(0, p[1]))))))

    if fam == "C":
        demand = [float(rng.randint(1, 4) * 10) for _ in range(n)]
    else:
        demand = [float(rng.randint(3, 30)) for _ in range(n)]
    pickup = [float(round(q * rng.uniform(0.0, 0.9))) for q in demand]
    total = sum(demand)
    q2 = _ceil10(1.15 * total / math.ceil(n / 4))
    q2 = max(q2, _ceil10(max(demand) + max(pickup)))
    q1 = _ceil10(1.2 * total) if n <= 15 else _ceil10(1.2 * total / max(1, ns // 2))
    battery = float(math.ceil(max(1.45 * reach, 40.0) * battery_scale))
    # a full recharge takes about a tenth of the horizon
    g = round(0.1 * horizon / battery, 2)
    fleet = Fleet(q1=q1, q2=q2, battery=battery, consumption=1.0, charging_rate=g)

    nodes = [Node("D0", NodeRole.DEPOT, *depot, due=horizon)]
    nodes += [Node(f"S{k + 1}", NodeRole.SATELLITE, *p, due=horizon) for k, p in enumerate(sats)]
    nodes += [Node(f"F{k + 1}", NodeRole.STATION, *p, due=horizon) for k, p in enumerate(stations)]
    for k, p in enumerate(custs):
        s = near(p)
        t_in = math.dist(depot, s) + math.dist(s, p)
        # detour through the best station when the battery cannot cover the leg
        if 2 * math.dist(s, p) > battery:
            legs = [math.dist(s, f) + math.dist(f, p) + g * min(battery, math.dist(s, f))
                    for f in stations]
            t_in = math.dist(depot, s) + min(legs) if legs else t_in
        back = math.dist(p, s) * 1.5
        ready, due = _windows(rng, fam, cls, horizon, service, t_in + 1, back)
        nodes.append(Node(f"C{k + 1}", NodeRole.CUSTOMER, *p, demand[k], pickup[k],
                          ready, due, service))
    return Instance(name, tuple(nodes), fleet, Variant.TW, horizon=horizon)


def _constructible(inst: Instance) -> bool:
    from .construct import ConstructConfig, ConstructionFailed, construct
    from .instance import apply_pd_transform, loads_instance

    text = dumps_instance(inst)
    for variant in (Variant.BASE, Variant.TW, Variant.SPD, Variant.PD):
        v = loads_instance(text, variant)
        if variant is Variant.PD:
            v = apply_pd_transform(v)
        seeds = range(4) if v.n_customers <= 30 else range(1)
        try:
            for h in ("savings", "insertion"):
                construct(v, ConstructConfig(heuristic=h, determinism_rate=1.0))
                for seed in seeds:
                    construct(v, ConstructConfig(heuristic=h, rng_seed=seed))
        except ConstructionFailed:
            return False
    return True


def build(name: str) -> Instance:
    """Generate ``name``, widening the battery until every variant is constructible."""
    scale = 1.0
    for _ in range(12):
        inst = generate(name, scale)
        if _constructible(inst):
            return inst
        scale *= 1.15
    raise RuntimeError(f"could not generate a feasible {name}")


def fixture_text(name: str) -> str:
    inst = build(name)
    # the distance policy is left to the variant default of the reader
    lines = [ln for ln in dumps_instance(replace(inst, variant=Variant.TW)).splitlines()
             if not ln.startswith("DISTANCE:")]
    header = "# synthetic stand-in generated by evrp2e.synthetic; not the public benchmark file"
    return "\n".join([header] + lines) + "\n"



BASE_5 = ["C101", "C103", "C206", "C208", "R104", "R105", "R202", "R203",
          "RC105", "RC108", "RC204", "RC208"]
BASE_10 = ["C101", "C104", "C202", "C205", "R102", "R103", "R201", "R203",
           "RC102", "RC108", "RC201", "RC205"]
BASE_15 = ["C103", "C106", "C202", "C208", "R102", "R105", "R202", "R209",
           "RC103", "RC108", "RC202", "RC204"]
LARGE = ["C101", "R101", "RC101"]


def fixture_names() -> list[str]:
    names = [f"{f}_C5x" for f in BASE_5] + [f"{f}_C5" for f in BASE_5]
    names += [f"{f}_C10x" for f in BASE_10] + [f"{f}_C10" for f in BASE_10]
    names += [f"{f}_C15x" for f in BASE_15] + [f"{f}_C15" for f in BASE_15]
    names += [f"{f}_21x" for f in LARGE] + ["C101_C21"]
    return names
