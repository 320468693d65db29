"""Problem data for the two-echelon electric vehicle routing problem.

An :class:`Instance` is immutable once built. Variant-specific views (time
windows, pickups, duplicated demand points, satellite/station copies) are
produced by constructing new instances, never by mutation.

Canonical file layout::

    # comment
    NAME: C101_C5x
    Q1: 400
    Q2: 200
    B: 77.75
    h: 1.0
    g: 3.47
    velocity: 1.0
    c_lv: 0
    c_ev: 0
    id role x y delivery pickup ready due service
    D0 d 40 50 0 0 0 1236 0
    S1 s 45 60 0 0 0 1236 0
    F1 f 30 60 0 0 0 1236 0
    C1 c 25 85 20 5 145 175 90

Optional header keys: ``CUSTOMERS``, ``SATELLITES``, ``STATIONS`` (checked
against the node table), ``SATELLITE_COPIES``, ``STATION_COPIES``,
``DISTANCE`` (``exact``, ``round`` or ``ceil``) and ``EXPANDED``. A tenth
``origin`` column links copies and split demand points to their physical node.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Union


class InstanceError(ValueError):
    """Base class for instance ingestion and transformation errors."""


class MalformedFile(InstanceError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownNodeRole(MalformedFile):
    pass


class MissingFleetParameter(InstanceError):
    def __init__(self, key: str):
        super().__init__(f"missing fleet parameter {key!r}")
        self.key = key


class UnknownNode(InstanceError, KeyError):
    def __init__(self, node_id: str):
        InstanceError.__init__(self, f"unknown node {node_id!r}")
        self.node_id = node_id

    __str__ = InstanceError.__str__


class OddDemandUnderIntegerSplit(InstanceError):
    pass


class NodeRole(str, Enum):
    DEPOT = "d"
    SATELLITE = "s"
    STATION = "f"
    CUSTOMER = "c"


class Variant(str, Enum):
    BASE = "base"
    TW = "tw"
    SPD = "spd"
    PD = "pd"


class DistancePolicy(str, Enum):
    EXACT = "exact"
    ROUND_HALF_UP = "round"
    CEIL = "ceil"

    def apply(self, value: float) -> float:
        if self is DistancePolicy.EXACT:
            return value
        if self is DistancePolicy.ROUND_HALF_UP:
            return float(math.floor(value + 0.5))
        return float(math.ceil(value))


def default_policy(variant: Variant) -> DistancePolicy:
    # TW tables report decimals, the other variants integers
    return DistancePolicy.EXACT if variant is Variant.TW else DistancePolicy.ROUND_HALF_UP


@dataclass(frozen=True)
class Node:
    id: str
    role: NodeRole
    x: float
    y: float
    delivery: float = 0.0
    pickup: float = 0.0
    ready: float = 0.0
    due: float = math.inf
    service: float = 0.0
    origin: str | None = None

    def __post_init__(self):
        if self.delivery < 0 or self.pickup < 0:
            raise InstanceError(f"node {self.id}: negative demand")
        if self.ready > self.due:
            raise InstanceError(f"node {self.id}: ready time after due time")
        if self.role is not NodeRole.CUSTOMER and (self.delivery or self.pickup):
            raise InstanceError(f"node {self.id}: only customers carry demand")

    @property
    def physical(self) -> str:
        """Id of the physical location this node stands for."""
        return self.origin or self.id


@dataclass(frozen=True)
class Fleet:
    q1: float
    q2: float
    battery: float
    consumption: float
    charging_rate: float
    cost_lv: float = 0.0
    cost_ev: float = 0.0
    velocity: float = 1.0

    def __post_init__(self):
        for name in ("q1", "q2", "battery", "consumption", "charging_rate", "velocity"):
            if not getattr(self, name) > 0:
                raise InstanceError(f"fleet parameter {name} must be positive")
        if self.cost_lv < 0 or self.cost_ev < 0:
            raise InstanceError("vehicle costs must be non-negative")


@dataclass(frozen=True)
class PdTransformConfig:
    """How customer demand is divided between the two duplicated points.

    ``division_rate_pct`` is ``"equal"``, an integer percentage in [20, 50]
    applied to every customer, or ``"random"`` to draw one per customer from
    ``rng_seed``. With ``strict`` set, a split that cannot be represented in
    integers raises instead of rounding the first share half-up.
    """

    division_rate_pct: Union[int, str] = "equal"
    rng_seed: int = 0
    strict: bool = False

    def __post_init__(self):
        rate = self.division_rate_pct
        if isinstance(rate, str):
            if rate not in ("equal", "random"):
                raise InstanceError(f"bad division rate {rate!r}")
        elif not 20 <= rate <= 50:
            raise InstanceError("division rate must lie in [20, 50]")


@dataclass(frozen=True)
class Instance:
    name: str
    nodes: tuple[Node, ...]
    fleet: Fleet
    variant: Variant = Variant.BASE
    satellite_copies: int = 4
    station_copies: int = 3
    distance_policy: DistancePolicy | None = None
    horizon: float | None = None
    expanded: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.distance_policy is None:
            object.__setattr__(self, "distance_policy", default_policy(self.variant))
        else:
            object.__setattr__(self, "distance_policy", DistancePolicy(self.distance_policy))
        if self.horizon is None:
            dues = [n.due for n in self.nodes if n.role is NodeRole.DEPOT]
            object.__setattr__(self, "horizon", max(dues) if dues else math.inf)
        if self.satellite_copies < 1 or self.station_copies < 1:
            raise InstanceError("copy counts must be positive")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise InstanceError("duplicate node ids")
        # customer-free instances are allowed in memory; files must have customers
        for role in (NodeRole.DEPOT, NodeRole.SATELLITE):
            if not any(n.role is role for n in self.nodes):
                raise InstanceError(f"instance needs at least one {role.name.lower()}")

    # --- lookups -----------------------------------------------------------

    @cached_property
    def index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    def _role_indices(self, role: NodeRole) -> tuple[int, ...]:
        return tuple(i for i, n in enumerate(self.nodes) if n.role is role)

    @cached_property
    def depots(self) -> tuple[int, ...]:
        return self._role_indices(NodeRole.DEPOT)

    @cached_property
    def satellites(self) -> tuple[int, ...]:
        return self._role_indices(NodeRole.SATELLITE)

    @cached_property
    def stations(self) -> tuple[int, ...]:
        return self._role_indices(NodeRole.STATION)

    @cached_property
    def customers(self) -> tuple[int, ...]:
        return self._role_indices(NodeRole.CUSTOMER)

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[self.index[node_id]]
        except KeyError:
            raise UnknownNode(node_id) from None

    def idx(self, node_id: str) -> int:
        try:
            return self.index[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    @cached_property
    def dist(self) -> list[list[float]]:
        """Distance matrix (node index based) under the distance policy."""
        xs = [n.x for n in self.nodes]
        ys = [n.y for n in self.nodes]
        policy = self.distance_policy
        size = len(self.nodes)
        out = [[0.0] * size for _ in range(size)]
        for i in range(size):
            row = out[i]
            for j in range(i + 1, size):
                d = policy.apply(math.hypot(xs[i] - xs[j], ys[i] - ys[j]))
                row[j] = d
                out[j][i] = d
        return out

    @cached_property
    def travel_time(self) -> list[list[float]]:
        v = self.fleet.velocity
        return [[d / v for d in row] for row in self.dist]

    def distance(self, i: str, j: str) -> float:
        return self.dist[self.idx(i)][self.idx(j)]

    @cached_property
    def visit_limit(self) -> dict[int, int]:
        """Maximum visits per satellite (trucks) and station (EVs) node."""
        sat = 1 if self.expanded else self.satellite_copies
        sta = 1 if self.expanded else self.station_copies
        limits = {i: sat for i in self.satellites}
        limits.update({i: sta for i in self.stations})
        return limits

    @property
    def n_customers(self) -> int:
        return len(self.customers)

    def total_delivery(self) -> float:
        return sum(self.nodes[i].delivery for i in self.customers)

    def with_policy(self, policy: DistancePolicy) -> "Instance":
        return replace(self, distance_policy=policy)


# --- parsing ------------------------------------------------------------------

_FLEET_KEYS = {
    "q1": "q1", "q2": "q2", "b": "battery", "h": "consumption", "g": "charging_rate",
    "velocity": "velocity", "c_lv": "cost_lv", "c_ev": "cost_ev",
}
_REQUIRED = ("q1", "q2", "b", "h", "g")


def _as_float(text: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise MalformedFile(line, f"not a number: {text!r}") from None


def loads_instance(
    text: str,
    variant: Variant | str = Variant.BASE,
    *,
    name: str | None = None,
    distance_policy: DistancePolicy | str | None = None,
    satellite_copies: int | None = None,
    station_copies: int | None = None,
) -> Instance:
    variant = Variant(variant)
    header: dict[str, tuple[str, int]] = {}
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" in line:
            key, _, value = line.partition(":")
            header[key.strip().lower()] = (value.strip(), lineno)
            continue
        parts = line.split()
        if parts[:2] == ["id", "role"]:
            continue
        if len(parts) not in (9, 10):
            raise MalformedFile(lineno, f"expected 9 or 10 columns, got {len(parts)}")
        rows.append((lineno, parts))

    for key in _REQUIRED:
        if key not in header:
            raise MissingFleetParameter(key.upper() if key.startswith("q") else key)
    fleet_args = {
        attr: _as_float(header[key][0], header[key][1])
        for key, attr in _FLEET_KEYS.items() if key in header
    }
    try:
        fleet = Fleet(**fleet_args)
    except InstanceError as exc:
        raise MalformedFile(0, str(exc)) from None

    raw_nodes = []
    for lineno, parts in rows:
        try:
            role = NodeRole(parts[1])
        except ValueError:
            raise UnknownNodeRole(lineno, f"unknown node role {parts[1]!r}") from None
        vals = [_as_float(p, lineno) for p in parts[2:9]]
        origin = parts[9] if len(parts) == 10 and parts[9] != parts[0] else None
        raw_nodes.append((lineno, parts[0], role, vals, origin))

    dues = [v[5] for _, _, role, v, _ in raw_nodes if role is NodeRole.DEPOT]
    horizon = max(dues) if dues else math.inf
    nodes = []
    for lineno, node_id, role, (x, y, dlv, pck, ready, due, service), origin in raw_nodes:
        if variant is not Variant.SPD:
            pck = 0.0
        if variant is not Variant.TW:
            ready, due = 0.0, horizon
        try:
            nodes.append(Node(node_id, role, x, y, dlv, pck, ready, due, service, origin))
        except InstanceError as exc:
            raise MalformedFile(lineno, str(exc)) from None

    if not any(n.role is NodeRole.CUSTOMER for n in nodes):
        raise MalformedFile(0, "instance needs at least one customer")
    counts = {"customers": NodeRole.CUSTOMER, "satellites": NodeRole.SATELLITE,
              "stations": NodeRole.STATION}
    for key, role in counts.items():
        if key in header:
            value, lineno = header[key]
            found = sum(1 for n in nodes if n.role is role)
            if int(_as_float(value, lineno)) != found:
                raise MalformedFile(lineno, f"header says {value} {key}, table has {found}")

    def _int(key, override, default):
        if override is not None:
            return override
        if key in header:
            return int(_as_float(*header[key]))
        return default

    policy = distance_policy or (header["distance"][0] if "distance" in header else None)
    try:
        return Instance(
            name=name or (header["name"][0] if "name" in header else "instance"),
            nodes=tuple(nodes),
            fleet=fleet,
            variant=variant,
            satellite_copies=_int("satellite_copies", satellite_copies, 4),
            station_copies=_int("station_copies", station_copies, 3),
            distance_policy=DistancePolicy(policy) if policy else None,
            horizon=horizon,
            expanded=bool(_int("expanded", None, 0)),
        )
    except InstanceError as exc:
        if isinstance(exc, MalformedFile):
            raise
        raise MalformedFile(0, str(exc)) from None


def parse_instance(path: str | Path, variant: Variant | str = Variant.BASE, **kwargs) -> Instance:
    """Read a canonical instance file; the file stem is the default name."""
    path = Path(path)
    text = path.read_text()
    if "name" not in kwargs and not re.search(r"^\s*NAME\s*:", text, re.M | re.I):
        kwargs["name"] = path.stem
    return loads_instance(text, variant, **kwargs)


def _num(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def dumps_instance(inst: Instance) -> str:
    f = inst.fleet
    lines = [
        f"NAME: {inst.name}",
        f"Q1: {_num(f.q1)}",
        f"Q2: {_num(f.q2)}",
        f"B: {_num(f.battery)}",
        f"h: {_num(f.consumption)}",
        f"g: {_num(f.charging_rate)}",
        f"velocity: {_num(f.velocity)}",
        f"c_lv: {_num(f.cost_lv)}",
        f"c_ev: {_num(f.cost_ev)}",
        f"SATELLITE_COPIES: {inst.satellite_copies}",
        f"STATION_COPIES: {inst.station_copies}",
        f"DISTANCE: {inst.distance_policy.value}",
    ]
    if inst.expanded:
        lines.append("EXPANDED: 1")
    with_origin = any(n.origin for n in inst.nodes)
    cols = "id role x y delivery pickup ready due service"
    lines.append(cols + (" origin" if with_origin else ""))
    for n in inst.nodes:
        row = [n.id, n.role.value] + [_num(v) for v in
               (n.x, n.y, n.delivery, n.pickup, n.ready, n.due, n.service)]
        if with_origin:
            row.append(n.physical)
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def write_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst))


# --- Schneider-style layout ---------------------------------------------------

_SCHNEIDER_PARAMS = {
    "Q": "B", "C": "Q2", "r": "h", "g": "g", "v": "velocity",
    "Q1": "Q1", "L": "Q1", "c_lv": "c_lv", "c_ev": "c_ev",
}


def convert_schneider(text: str, *, name: str = "instance", **overrides: float) -> str:
    """Translate the public EVRPTW-style table into the canonical layout.

    The source has a ``StringID Type x y demand ReadyTime DueDate ServiceTime``
    table (an optional ``pickup`` column is honoured) followed by parameter
    lines such as ``C Vehicle load capacity /200.0/``. Two-echelon files add
    ``s`` rows and a ``Q1``/``L`` truck capacity line. Missing parameters can
    be supplied as keyword overrides keyed by canonical header name.
    """
    columns: list[str] | None = None
    params: dict[str, float] = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        m = re.match(r"^(\S+)\s.*/\s*([-+0-9.eE]+)\s*/\s*$", line)
        if m:
            key = _SCHNEIDER_PARAMS.get(m.group(1))
            if key is None:
                raise MalformedFile(lineno, f"unknown parameter {m.group(1)!r}")
            params[key] = float(m.group(2))
            continue
        parts = line.split()
        if columns is None:
            columns = [p.lower() for p in parts]
            if columns[:2] != ["stringid", "type"]:
                raise MalformedFile(lineno, "missing StringID/Type table header")
            continue
        if len(parts) != len(columns):
            raise MalformedFile(lineno, "row width does not match table header")
        rec = dict(zip(columns, parts))
        if rec["type"] not in ("d", "s", "f", "c"):
            raise UnknownNodeRole(lineno, f"unknown node role {rec['type']!r}")
        rows.append(rec)
    if columns is None:
        raise MalformedFile(0, "empty file")
    params.update(overrides)
    for key in ("Q1", "Q2", "B", "h", "g"):
        if key not in params:
            raise MissingFleetParameter(key)
    params.setdefault("velocity", 1.0)
    params.setdefault("c_lv", 0.0)
    params.setdefault("c_ev", 0.0)
    out = [f"NAME: {name}"]
    out += [f"{k}: {_num(params[k])}" for k in
            ("Q1", "Q2", "B", "h", "g", "velocity", "c_lv", "c_ev")]
    out.append("id role x y delivery pickup ready due service")
    for rec in rows:
        out.append(" ".join([
            rec["stringid"], rec["type"], rec["x"], rec["y"], rec["demand"],
            rec.get("pickup", "0"), rec["readytime"], rec["duedate"], rec["servicetime"],
        ]))
    return "\n".join(out) + "\n"


# --- transformations ---------------------------------------------------------

def _split(q: float, pct: float | None, strict: bool, node_id: str) -> tuple[float, float]:
    if pct is None:
        if float(q).is_integer() and int(q) % 2:
            if strict:
                raise OddDemandUnderIntegerSplit(f"{node_id}: demand {q} is odd")
            first = float(math.ceil(q / 2))
        else:
            first = q / 2
    else:
        first = q * pct / 100
        if float(q).is_integer() and not float(first).is_integer():
            if strict:
                raise OddDemandUnderIntegerSplit(f"{node_id}: {pct}% of {q} is fractional")
            first = float(math.floor(first + 0.5))
    return first, q - first


def apply_pd_transform(inst: Instance, cfg: PdTransformConfig = PdTransformConfig()) -> Instance:
    """Duplicate every customer and divide its delivery demand between the twins."""
    if inst.variant not in (Variant.BASE, Variant.PD):
        raise InstanceError("partial delivery applies to base instances only")
    if any(inst.nodes[i].origin for i in inst.customers):
        raise InstanceError("instance already carries split demand points")
    rng = random.Random(cfg.rng_seed)
    nodes = []
    for n in inst.nodes:
        if n.role is not NodeRole.CUSTOMER:
            nodes.append(n)
            continue
        if n.delivery <= 0:
            raise InstanceError(f"customer {n.id} has no demand to split")
        rate = cfg.division_rate_pct
        pct = None if rate == "equal" else (rng.randint(20, 50) if rate == "random" else rate)
        q1, q2 = _split(n.delivery, pct, cfg.strict, n.id)
        nodes.append(replace(n, id=f"{n.id}.1", delivery=q1, pickup=0.0, origin=n.id))
        nodes.append(replace(n, id=f"{n.id}.2", delivery=q2, pickup=0.0, origin=n.id))
    return replace(inst, nodes=tuple(nodes), variant=Variant.PD)


def expand_copies(inst: Instance) -> Instance:
    """Replace each satellite and station by its configured number of copies."""
    if inst.expanded:
        return inst
    nodes = []
    for n in inst.nodes:
        if n.role is NodeRole.SATELLITE:
            count = inst.satellite_copies
        elif n.role is NodeRole.STATION:
            count = inst.station_copies
        else:
            nodes.append(n)
            continue
        nodes.extend(replace(n, id=f"{n.id}#{k}", origin=n.id) for k in range(1, count + 1))
    return replace(inst, nodes=tuple(nodes), expanded=True)


def copies_of(inst: Instance) -> dict[str, list[str]]:
    """Physical id -> ids of the nodes standing for it."""
    out: dict[str, list[str]] = {}
    for n in inst.nodes:
        out.setdefault(n.physical, []).append(n.id)
    return out


def load_instance(
    path: str | Path,
    variant: Variant | str = Variant.BASE,
    pd: PdTransformConfig | None = None,
    **kwargs,
) -> Instance:
    """Parse a file and, for the PD variant, duplicate its demand points."""
    variant = Variant(variant)
    inst = parse_instance(path, variant, **kwargs)
    if variant is Variant.PD and not any(inst.nodes[i].origin for i in inst.customers):
        inst = apply_pd_transform(inst, pd or PdTransformConfig())
    return inst


def zero_pickups(inst: Instance) -> Instance:
    nodes = tuple(replace(n, pickup=0.0) for n in inst.nodes)
    return replace(inst, nodes=nodes)


def customer_ids(inst: Instance) -> list[str]:
    return [inst.nodes[i].id for i in inst.customers]


def ids(inst: Instance, indices: Iterable[int]) -> list[str]:
    return [inst.nodes[i].id for i in indices]
