"""Symbolic MILP of the two-echelon EVRP with TW and SPD rows, plus LP/MPS I/O.

The model is built over an instance with satellite and station copies
expanded. Besides the copies it adds one dummy depot per depot (truck route
ends) and one dummy satellite per satellite copy (EV route ends). Model nodes
get short labels (``d0``, ``dd0``, ``s0``, ``ss0``, ``r0``, ``c0``) that
are used in variable and row names, e.g. ``y_s0_c3`` or ``c7_s0``.

Row families are tagged ``c2`` .. ``c20`` for the base model, ``tw1`` ..
``tw6`` and ``spd1`` .. ``spd7`` for the variants. Variable bounds carry a
family as well, since some equations (the 0 <= u <= Q ranges, battery
ranges) are bounds rather than rows.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .instance import Instance, Variant, expand_copies
from .solution import Route, Solution, evaluate, resolve_amounts

TOL = 1e-6


class MilpError(ValueError):
    pass


class InconsistentArcs(MilpError):
    """Arc values do not describe a set of routes (fractional, subtour, dangling)."""


class ObjectiveMismatch(MilpError):
    pass


class ImportInfeasible(MilpError):
    """The reconstructed solution fails the validator."""


@dataclass(frozen=True)
class Var:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    binary: bool = False
    family: str = ""


@dataclass(frozen=True)
class Row:
    name: str
    family: str
    terms: tuple[tuple[str, float], ...]
    sense: str  # "<=", ">=", "="
    rhs: float


@dataclass(frozen=True)
class MNode:
    label: str
    kind: str  # D, DD, S, SS, R, C
    index: int  # node index in the expanded instance


@dataclass
class MilpModel:
    name: str
    inst: Instance  # expanded
    nodes: list[MNode]
    variables: dict[str, Var] = field(default_factory=dict)
    rows: list[Row] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    big_m: float = 0.0

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.rows)

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.family] = out.get(r.family, 0) + 1
        return out

    def of_kind(self, *kinds: str) -> list[MNode]:
        return [n for n in self.nodes if n.kind in kinds]

    def label(self, kind: str, index: int) -> MNode:
        for n in self.nodes:
            if n.kind == kind and n.index == index:
                return n
        raise KeyError((kind, index))


# --- building ------------------------------------------------------------------

def _arcs1(m: MilpModel):
    """Truck arcs: depot -> copy, copy -> copy, copy -> dummy depot."""
    D, S, DD = m.of_kind("D"), m.of_kind("S"), m.of_kind("DD")
    out = [(a, b) for a in D for b in S]
    out += [(a, b) for a in S for b in S if a is not b]
    out += [(a, b) for a in S for b in DD]
    return out


def _arcs2(m: MilpModel):
    """EV arcs: copy -> R/C, R/C -> R/C, R/C -> dummy satellite."""
    S, K, SS = m.of_kind("S"), m.of_kind("R", "C"), m.of_kind("SS")
    out = [(a, b) for a in S for b in K]
    out += [(a, b) for a in K for b in K if a is not b]
    out += [(a, b) for a in K for b in SS]
    return out


def big_m(inst: Instance) -> float:
    """Big-M shared by the time rows (see the decisions ledger)."""
    f = inst.fleet
    t = inst.travel_time
    max_t = max(max(row) for row in t)
    max_s = max(n.service for n in inst.nodes)
    n_sat = len(inst.satellites)
    n_sta = len(inst.stations)
    truck_span = (n_sat + 1) * (max_t + max_s)
    return max(inst.horizon, truck_span) + max_s + max_t + (n_sta + 1) * (max_t + max_s + f.charging_rate * f.battery)


def build_model(inst: Instance) -> MilpModel:
    """MILP over ``inst``; copies are expanded first if needed."""
    exp = inst if inst.expanded else expand_copies(inst)
    nodes: list[MNode] = []
    for k, i in enumerate(exp.depots):
        nodes.append(MNode(f"d{k}", "D", i))
    for k, i in enumerate(exp.depots):
        nodes.append(MNode(f"dd{k}", "DD", i))
    for k, i in enumerate(exp.satellites):
        nodes.append(MNode(f"s{k}", "S", i))
    for k, i in enumerate(exp.satellites):
        nodes.append(MNode(f"ss{k}", "SS", i))
    for k, i in enumerate(exp.stations):
        nodes.append(MNode(f"r{k}", "R", i))
    for k, i in enumerate(exp.customers):
        nodes.append(MNode(f"c{k}", "C", i))
    m = MilpModel(exp.name, exp, nodes, big_m=big_m(exp))
    _Builder(m).build()
    return m


class _Builder:
    def __init__(self, m: MilpModel):
        self.m = m
        inst = m.inst
        self.inst = inst
        self.f = inst.fleet
        self.d = inst.dist
        self.t = inst.travel_time
        self.tw = inst.variant is Variant.TW
        self.spd = inst.variant is Variant.SPD
        self.A1 = _arcs1(m)
        self.A2 = _arcs2(m)
        self.S = m.of_kind("S")
        self.SS = {s.label: ss for s, ss in zip(self.S, m.of_kind("SS"))}
        self.R = m.of_kind("R")
        self.C = m.of_kind("C")
        self.K = self.R + self.C

    def var(self, name, lb=0.0, ub=math.inf, binary=False, family=""):
        self.m.variables[name] = Var(name, lb, 1.0 if binary else ub, binary, family)
        return name

    def row(self, name, family, terms, sense, rhs):
        merged: dict[str, float] = {}
        for v, c in terms:
            merged[v] = merged.get(v, 0.0) + c
        self.m.rows.append(Row(name, family, tuple(merged.items()), sense, float(rhs)))

    def node_val(self, n: MNode, attr: str) -> float:
        return getattr(self.inst.nodes[n.index], attr)

    def build(self):
        m, f = self.m, self.f
        q1, q2, B, h, g = f.q1, f.q2, f.battery, f.consumption, f.charging_rate
        A1, A2, S, R, C, K = self.A1, self.A2, self.S, self.R, self.C, self.K
        d = self.d
        # variables
        for a, b in A1:
            self.var(f"x_{a.label}_{b.label}", binary=True, family="c21")
            self.var(f"u1_{a.label}_{b.label}", 0.0, q1, family="c5")
            if self.spd:
                self.var(f"v1_{a.label}_{b.label}", 0.0, q1, family="spd3")
        for a, b in A2:
            self.var(f"y_{a.label}_{b.label}", binary=True, family="c22")
            self.var(f"u2_{a.label}_{b.label}", 0.0, q2, family="c16")
            if self.spd:
                self.var(f"v2_{a.label}_{b.label}", 0.0, q2, family="spd7")
        for l in K:
            for s in S:
                self.var(f"z_{l.label}_{s.label}", binary=True, family="c11")
        for s in S:
            self.var(f"D1_{s.label}", family="c7")
            if self.spd:
                self.var(f"P1_{s.label}", family="spd4")
        for n in S + R + C + m.of_kind("SS"):
            self.var(f"bsca_{n.label}", 0.0, B, family="c18")
        for n in S + R:
            self.var(f"bscd_{n.label}", 0.0, B, family="c20")
        if self.tw:
            for n in m.of_kind("D", "S", "DD"):
                self.var(f"t1_{n.label}", family="tw2")
            for n in S + R + C + m.of_kind("SS"):
                self.var(f"t2_{n.label}", family="tw4")

        # objective
        obj = m.objective
        for a, b in A1:
            obj[f"x_{a.label}_{b.label}"] = d[a.index][b.index] + (f.cost_lv if a.kind == "D" else 0.0)
        for a, b in A2:
            obj[f"y_{a.label}_{b.label}"] = d[a.index][b.index] + (f.cost_ev if a.kind == "S" else 0.0)

        out1 = {n.label: [] for n in m.nodes}
        in1 = {n.label: [] for n in m.nodes}
        for a, b in A1:
            out1[a.label].append(b)
            in1[b.label].append(a)
        out2 = {n.label: [] for n in m.nodes}
        in2 = {n.label: [] for n in m.nodes}
        for a, b in A2:
            out2[a.label].append(b)
            in2[b.label].append(a)

        x = lambda a, b: f"x_{a.label}_{b.label}"  # noqa: E731
        y = lambda a, b: f"y_{a.label}_{b.label}"  # noqa: E731

        # first echelon
        for s in S:
            self.row(f"c2_{s.label}", "c2", [(x(s, b), 1.0) for b in out1[s.label]], "<=", 1)
        for s in S:
            self.row(f"c3_{s.label}", "c3", [(x(a, s), 1.0) for a in in1[s.label]]
                     + [(x(s, b), -1.0) for b in out1[s.label]], "=", 0)
        for s in S:
            self.row(f"c4_{s.label}", "c4", [(f"u1_{a.label}_{s.label}", 1.0) for a in in1[s.label]]
                     + [(f"u1_{s.label}_{b.label}", -1.0) for b in out1[s.label]]
                     + [(f"D1_{s.label}", -1.0)], "=", 0)
        for a, b in A1:
            self.row(f"c6_{a.label}_{b.label}", "c6",
                     [(f"u1_{a.label}_{b.label}", 1.0), (x(a, b), -q1)], "<=", 0)
        for s in S:
            self.row(f"c7_{s.label}", "c7",
                     [(f"z_{l.label}_{s.label}", self.node_val(l, "delivery")) for l in C]
                     + [(f"D1_{s.label}", -1.0)], "=", 0)

        # second echelon routing and assignment
        for c in C:
            self.row(f"c8_{c.label}", "c8", [(y(c, b), 1.0) for b in out2[c.label]], "=", 1)
        for r in R:
            self.row(f"c9_{r.label}", "c9", [(y(r, b), 1.0) for b in out2[r.label]], "<=", 1)
        for j in K:
            self.row(f"c10_{j.label}", "c10", [(y(a, j), 1.0) for a in in2[j.label]]
                     + [(y(j, b), -1.0) for b in out2[j.label]], "=", 0)
        for l in C:
            self.row(f"c11_{l.label}", "c11", [(f"z_{l.label}_{s.label}", 1.0) for s in S], "=", 1)
        for l in R:
            # a visited station belongs to exactly one satellite copy
            self.row(f"c11_{l.label}", "c11", [(f"z_{l.label}_{s.label}", 1.0) for s in S]
                     + [(y(l, b), -1.0) for b in out2[l.label]], "=", 0)
        for s in S:
            ss = self.SS[s.label]
            for l in K:
                self.row(f"c12_{l.label}_{s.label}", "c12",
                         [(y(l, ss), 1.0), (f"z_{l.label}_{s.label}", -1.0)], "<=", 0)
        for s in S:
            for l in K:
                self.row(f"c13_{s.label}_{l.label}", "c13",
                         [(y(s, l), 1.0), (f"z_{l.label}_{s.label}", -1.0)], "<=", 0)
        for l in K:
            for mm in K:
                if l is mm:
                    continue
                for s in S:
                    terms = [(y(l, mm), 1.0), (f"z_{l.label}_{s.label}", 1.0)]
                    terms += [(f"z_{mm.label}_{o.label}", 1.0) for o in S if o is not s]
                    self.row(f"c14_{l.label}_{mm.label}_{s.label}", "c14", terms, "<=", 2)
        for j in K:
            self.row(f"c15_{j.label}", "c15", [(f"u2_{a.label}_{j.label}", 1.0) for a in in2[j.label]]
                     + [(f"u2_{j.label}_{b.label}", -1.0) for b in out2[j.label]],
                     "=", self.node_val(j, "delivery"))
        for a, b in A2:
            self.row(f"c17_{a.label}_{b.label}", "c17",
                     [(f"u2_{a.label}_{b.label}", 1.0), (y(a, b), -q2)], "<=", 0)

        # battery
        for a, b in A2:
            fam = "c18" if a.kind == "C" else "c19"
            src = f"bsca_{a.label}" if a.kind == "C" else f"bscd_{a.label}"
            self.row(f"{fam}_{a.label}_{b.label}", fam,
                     [(f"bsca_{b.label}", 1.0), (src, -1.0), (y(a, b), h * d[a.index][b.index] + B)],
                     "<=", B)
        for n in S + R:
            self.row(f"c20_{n.label}", "c20", [(f"bsca_{n.label}", 1.0), (f"bscd_{n.label}", -1.0)], "<=", 0)

        if self.tw:
            self._time_rows(in1, out1)
        if self.spd:
            self._spd_rows(in1, out1, in2, out2)

    def _time_rows(self, in1, out1):
        m, M = self.m, self.m.big_m
        t = self.t
        g, B = self.f.charging_rate, self.f.battery
        for n in m.of_kind("D"):
            self.row(f"tw1_{n.label}", "tw1", [(f"t1_{n.label}", 1.0)], "=", 0)
        for a, b in self.A1:
            coef = t[a.index][b.index] + self.node_val(a, "service") + M
            self.row(f"tw2_{a.label}_{b.label}", "tw2",
                     [(f"t1_{a.label}", 1.0), (f"t1_{b.label}", -1.0), (f"x_{a.label}_{b.label}", coef)],
                     "<=", M)
        for s in self.S:
            self.row(f"tw3_{s.label}", "tw3", [(f"t1_{s.label}", 1.0), (f"t2_{s.label}", -1.0)], "<=", 0)
        for a, b in self.A2:
            coef = t[a.index][b.index] + self.node_val(a, "service") + M
            self.row(f"tw4_{a.label}_{b.label}", "tw4",
                     [(f"t2_{a.label}", 1.0), (f"t2_{b.label}", -1.0), (f"y_{a.label}_{b.label}", coef)],
                     "<=", M)
        for a, b in self.A2:
            if a.kind != "R":
                continue
            coef = t[a.index][b.index] + self.node_val(a, "service") + M + g * B
            self.row(f"tw5_{a.label}_{b.label}", "tw5",
                     [(f"t2_{a.label}", 1.0), (f"t2_{b.label}", -1.0), (f"y_{a.label}_{b.label}", coef),
                      (f"bsca_{a.label}", -g)], "<=", M)
        for c in self.C:
            self.row(f"tw6_{c.label}_e", "tw6", [(f"t2_{c.label}", 1.0)], ">=", self.node_val(c, "ready"))
            self.row(f"tw6_{c.label}_l", "tw6", [(f"t2_{c.label}", 1.0)], "<=", self.node_val(c, "due"))

    def _spd_rows(self, in1, out1, in2, out2):
        m = self.m
        q1, q2 = self.f.q1, self.f.q2
        for s in self.S:
            self.row(f"spd1_{s.label}", "spd1", [(f"v1_{s.label}_{b.label}", 1.0) for b in out1[s.label]]
                     + [(f"v1_{a.label}_{s.label}", -1.0) for a in in1[s.label]]
                     + [(f"P1_{s.label}", -1.0)], "=", 0)
        for a, b in self.A1:
            if a.kind == "D":
                self.row(f"spd2_{a.label}_{b.label}", "spd2", [(f"v1_{a.label}_{b.label}", 1.0)], "=", 0)
        for a, b in self.A1:
            self.row(f"spd3_{a.label}_{b.label}", "spd3",
                     [(f"u1_{a.label}_{b.label}", 1.0), (f"v1_{a.label}_{b.label}", 1.0),
                      (f"x_{a.label}_{b.label}", -q1)], "<=", 0)
        for s in self.S:
            self.row(f"spd4_{s.label}", "spd4",
                     [(f"z_{l.label}_{s.label}", self.node_val(l, "pickup")) for l in self.C]
                     + [(f"P1_{s.label}", -1.0)], "=", 0)
        for j in self.K:
            self.row(f"spd5_{j.label}", "spd5", [(f"v2_{j.label}_{b.label}", 1.0) for b in out2[j.label]]
                     + [(f"v2_{a.label}_{j.label}", -1.0) for a in in2[j.label]],
                     "=", self.node_val(j, "pickup"))
        for a, b in self.A2:
            if a.kind == "S":
                self.row(f"spd6_{a.label}_{b.label}", "spd6", [(f"v2_{a.label}_{b.label}", 1.0)], "=", 0)
        for a, b in self.A2:
            self.row(f"spd7_{a.label}_{b.label}", "spd7",
                     [(f"u2_{a.label}_{b.label}", 1.0), (f"v2_{a.label}_{b.label}", 1.0),
                      (f"y_{a.label}_{b.label}", -q2)], "<=", 0)


# --- checking -----------------------------------------------------------------------

def row_activity(row: Row, values: dict[str, float]) -> float:
    return sum(c * values.get(v, 0.0) for v, c in row.terms)


def violated_rows(model: MilpModel, values: dict[str, float], tol: float = TOL) -> list[tuple[str, str, float]]:
    """(name, family, amount) for every violated row or variable bound."""
    out = []
    for r in model.rows:
        act = row_activity(r, values)
        if r.sense == "<=":
            gap = act - r.rhs
        elif r.sense == ">=":
            gap = r.rhs - act
        else:
            gap = abs(act - r.rhs)
        if gap > tol * max(1.0, abs(r.rhs)):
            out.append((r.name, r.family, gap))
    for v in model.variables.values():
        val = values.get(v.name, 0.0)
        if val < v.lb - tol:
            out.append((f"bound:{v.name}", v.family, v.lb - val))
        elif val > v.ub + tol:
            out.append((f"bound:{v.name}", v.family, val - v.ub))
        elif v.binary and abs(val - round(val)) > tol:
            out.append((f"int:{v.name}", v.family, abs(val - round(val))))
    return out


def objective_value(model: MilpModel, values: dict[str, float]) -> float:
    return sum(c * values.get(v, 0.0) for v, c in model.objective.items())


# --- solution <-> values ----------------------------------------------------------

def _match(groups: list[tuple[float, float]], targets: list[tuple[float, float]]):
    """Bin index per group with bin sums equal to targets, or None."""
    order = sorted(range(len(groups)), key=lambda k: groups[k], reverse=True)
    assign = [0] * len(groups)

    def rec(pos, remaining):
        if pos == len(order):
            return all(abs(a) < TOL and abs(b) < TOL for a, b in remaining)
        k = order[pos]
        dq, pq = groups[k]
        for b, (ra, rp) in enumerate(remaining):
            if dq <= ra + TOL and pq <= rp + TOL:
                assign[k] = b
                nxt = list(remaining)
                nxt[b] = (ra - dq, rp - pq)
                if rec(pos + 1, nxt):
                    return True
        return False

    return list(assign) if rec(0, list(targets)) else None


def solution_to_values(model: MilpModel, sol: Solution, base: Instance | None = None) -> dict[str, float]:
    """Variable values induced by ``sol`` (ids of ``base`` or of the expanded instance).

    Over-used copies are reused, so infeasible solutions still map to values
    (and then violate rows).
    """
    exp = model.inst
    base = base or exp
    spd = exp.variant is Variant.SPD
    tw = exp.variant is Variant.TW
    f = exp.fleet
    if base is not exp or not base.expanded:
        sol = resolve_amounts(base, sol)
    vals: dict[str, float] = {name: 0.0 for name in model.variables}

    def phys(node_id: str) -> str:
        n = exp.node(node_id) if node_id in exp.index else None
        return n.physical if n is not None else node_id

    copies: dict[str, list[MNode]] = {}
    for n in model.nodes:
        if n.kind in ("S", "R"):
            copies.setdefault(exp.nodes[n.index].physical, []).append(n)
    depot_of = {exp.nodes[n.index].id: n for n in model.of_kind("D")}
    dummy_depot = {exp.nodes[n.index].id: n for n in model.of_kind("DD")}
    dummy_sat = {s.label: ss for s, ss in zip(model.of_kind("S"), model.of_kind("SS"))}
    node_of_customer = {exp.nodes[n.index].id: n for n in model.of_kind("C")}

    used: dict[str, int] = {}

    def take(pid: str) -> MNode:
        lst = copies[pid]
        k = used.get(pid, 0)
        used[pid] = k + 1
        return lst[min(k, len(lst) - 1)]

    def setv(name, value):
        if name in vals:
            vals[name] += value

    t = exp.travel_time
    # trucks: each satellite visit takes the next free copy
    visit_copies: dict[str, list[tuple[MNode, float, float, float]]] = {}
    for r in sol.first_echelon:
        dep = depot_of[phys(r.stops[0])]
        seq = [dep] + [take(phys(s)) for s in r.inner] + [dummy_depot[phys(r.stops[-1])]]
        delivered = list(r.delivered) if r.delivered else [0.0] * len(r.stops)
        picked = list(r.picked_up) if r.picked_up else [0.0] * len(r.stops)
        u = sum(delivered)
        v = 0.0
        time = 0.0
        for k in range(1, len(seq)):
            a, b = seq[k - 1], seq[k]
            setv(f"x_{a.label}_{b.label}", 1.0)
            setv(f"u1_{a.label}_{b.label}", u)
            if spd:
                setv(f"v1_{a.label}_{b.label}", v)
            time += exp.nodes[a.index].service + t[a.index][b.index]
            if tw:
                vals[f"t1_{b.label}"] = time
            if b.kind == "S":
                u -= delivered[k]
                v += picked[k]
                setv(f"D1_{b.label}", delivered[k])
                if spd:
                    setv(f"P1_{b.label}", picked[k])
                visit_copies.setdefault(phys(r.stops[k]), []).append((b, delivered[k], picked[k], time))

    # EV routes grouped by satellite and matched to truck visits
    by_sat: dict[str, list[Route]] = {}
    for r in sol.second_echelon:
        by_sat.setdefault(phys(r.origin), []).append(r)
    nodes = exp.nodes
    ready: dict[str, float] = {}
    for sat, visits in visit_copies.items():
        ready[sat] = max(v[3] for v in visits)
    sat_start: dict[str, float] = {}
    for sat, visits in visit_copies.items():
        for node, *_ in visits:
            sat_start[node.label] = ready[sat]
    end_bsc: dict[str, float] = {}
    end_time: dict[str, float] = {}
    for sat, routes in sorted(by_sat.items()):
        visits = visit_copies.get(sat, [])
        groups = []
        for r in routes:
            custs = [nodes[exp.idx(k)] for k in r.inner if k in node_of_customer]
            groups.append((sum(n.delivery for n in custs),
                           sum(n.pickup for n in custs) if spd else 0.0))
        bins = None
        if len(visits) > 1:
            bins = _match(groups, [(v[1], v[2] if spd else 0.0) for v in visits])
        for k, r in enumerate(routes):
            if visits:
                s_node = visits[bins[k] if bins else 0][0]
            else:
                s_node = copies[sat][0]
            ss = dummy_sat[s_node.label]
            start = ready.get(sat, 0.0) if r.start_time is None else r.start_time
            sat_start[s_node.label] = min(sat_start.get(s_node.label, start), start)
            vals[f"bscd_{s_node.label}"] = f.battery
            vals[f"bsca_{s_node.label}"] = f.battery
            seq = [s_node]
            for sid in r.inner:
                p = phys(sid)
                seq.append(node_of_customer[sid] if sid in node_of_customer else take(p))
            seq.append(ss)
            u = sum(nodes[n.index].delivery for n in seq if n.kind == "C")
            v = 0.0
            bsc = f.battery
            depart = start + nodes[s_node.index].service
            for i in range(1, len(seq)):
                a, b = seq[i - 1], seq[i]
                setv(f"y_{a.label}_{b.label}", 1.0)
                setv(f"u2_{a.label}_{b.label}", u)
                if spd:
                    setv(f"v2_{a.label}_{b.label}", v)
                arr = depart + t[a.index][b.index]
                bsc_a = bsc - f.consumption * exp.dist[a.index][b.index]
                nb = nodes[b.index]
                if b.kind == "SS":
                    end_bsc[b.label] = min(end_bsc.get(b.label, bsc_a), bsc_a)
                    end_time[b.label] = max(end_time.get(b.label, arr), arr)
                    break
                vals[f"bsca_{b.label}"] = bsc_a
                # customer assignment comes from the solution's record, stations follow the route
                if b.kind != "C" or phys(sol.assignment.get(nodes[b.index].id, "")) == nodes[s_node.index].physical:
                    setv(f"z_{b.label}_{s_node.label}", 1.0)
                if b.kind == "C":
                    begin = max(arr, nb.ready)
                    depart = begin + nb.service
                    u -= nb.delivery
                    if spd:
                        v += nb.pickup
                    bsc = bsc_a
                else:
                    begin = arr
                    depart = arr + nb.service + f.charging_rate * max(0.0, f.battery - bsc_a)
                    bsc = f.battery
                    vals[f"bscd_{b.label}"] = f.battery
                if tw:
                    vals[f"t2_{b.label}"] = begin
    for label, val in end_bsc.items():
        vals[f"bsca_{label}"] = val
    if tw:
        for label, val in end_time.items():
            vals[f"t2_{label}"] = val
        for label, val in sat_start.items():
            vals[f"t2_{label}"] = val
    # customers on no route still carry their assignment
    for cid, sid in sol.assignment.items():
        if cid in node_of_customer:
            c = node_of_customer[cid]
            if not any(vals.get(f"z_{c.label}_{s.label}", 0.0) for s in model.of_kind("S")):
                p = phys(sid)
                if p in copies:
                    vals[f"z_{c.label}_{copies[p][0].label}"] = 1.0
    return vals


def _read_values(path: str | Path) -> tuple[dict[str, float], float | None]:
    values: dict[str, float] = {}
    objective = None
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace("=", " ").split()
        if len(parts) != 2:
            raise MilpError(f"bad solution line: {line!r}")
        name, raw = parts
        try:
            value = float(raw)
        except ValueError as exc:
            raise MilpError(f"bad value in line: {line!r}") from exc
        if name.lower() in ("obj", "objective"):
            objective = value
        else:
            values[name] = value
    return values, objective


def values_to_solution(model: MilpModel, values: dict[str, float], inst: Instance) -> Solution:
    """Follow x/y successors to rebuild routes; ids follow ``inst`` (copies or physical)."""
    exp = model.inst
    physical = not inst.expanded

    def ident(n: MNode) -> str:
        node = exp.nodes[n.index]
        return node.physical if physical and n.kind in ("S", "R", "SS") else node.id

    for name, var in model.variables.items():
        if var.binary:
            val = values.get(name, 0.0)
            if abs(val - round(val)) > TOL:
                raise InconsistentArcs(f"{name} = {val} is fractional")

    def succ_map(prefix):
        out: dict[str, list[str]] = {}
        for name, val in values.items():
            if name.startswith(prefix) and round(val) == 1 and name in model.variables:
                _, a, b = name.split("_")
                out.setdefault(a, []).append(b)
        return out

    by_label = {n.label: n for n in model.nodes}
    routes: list[Route] = []
    succ1 = succ_map("x_")
    seen1: set[str] = set()
    for dep in model.of_kind("D"):
        for first in sorted(succ1.get(dep.label, [])):
            seq = [dep]
            cur = first
            while True:
                node = by_label[cur]
                seq.append(node)
                if node.kind == "DD":
                    break
                if cur in seen1:
                    raise InconsistentArcs(f"truck route revisits {cur}")
                seen1.add(cur)
                nxt = succ1.get(cur, [])
                if len(nxt) != 1:
                    raise InconsistentArcs(f"{cur} has {len(nxt)} truck successors")
                cur = nxt[0]
            stops = [ident(n) for n in seq]
            stops[-1] = exp.nodes[seq[-1].index].id
            delivered = [0.0] + [values.get(f"D1_{n.label}", 0.0) for n in seq[1:-1]] + [0.0]
            picked = [0.0] + [values.get(f"P1_{n.label}", 0.0) for n in seq[1:-1]] + [0.0]
            routes.append(Route(1, tuple(stops), tuple(delivered), tuple(picked)))
    if any(a.startswith("s") and a not in seen1 for a in succ1):
        raise InconsistentArcs("truck arcs outside depot-rooted routes")

    succ2 = succ_map("y_")
    seen2: set[str] = set()
    for s in model.of_kind("S"):
        for first in sorted(succ2.get(s.label, [])):
            seq = [s]
            cur = first
            while True:
                node = by_label[cur]
                seq.append(node)
                if node.kind == "SS":
                    break
                if cur in seen2:
                    raise InconsistentArcs(f"EV route revisits {cur}")
                seen2.add(cur)
                nxt = succ2.get(cur, [])
                if len(nxt) != 1:
                    raise InconsistentArcs(f"{cur} has {len(nxt)} EV successors")
                cur = nxt[0]
            if exp.nodes[seq[-1].index].id != exp.nodes[s.index].id:
                raise InconsistentArcs(f"EV route from {s.label} ends at another satellite")
            stops = [ident(n) for n in seq]
            routes.append(Route(2, tuple(stops)))
    # cycles through station copies alone carry no cargo and are dropped
    if any(a not in seen2 for a in succ2 if by_label[a].kind == "C"):
        raise InconsistentArcs("EV arcs outside satellite-rooted routes (subtour)")

    assignment = {}
    for c in model.of_kind("C"):
        for s in model.of_kind("S"):
            if round(values.get(f"z_{c.label}_{s.label}", 0.0)) == 1:
                assignment[exp.nodes[c.index].id] = ident(s)
    return Solution(tuple(routes), assignment)


def import_solution(model: MilpModel, inst: Instance, solver_output: str | Path,
                    objective: float | None = None) -> Solution:
    """Read ``name value`` lines and rebuild a validated Solution.

    The solver objective comes from an ``OBJ <value>`` line or the argument;
    without either it is recomputed from the values.
    """
    values, file_obj = _read_values(solver_output)
    unknown = [n for n in values if n not in model.variables]
    if unknown:
        raise MilpError(f"unknown variables in solution file: {unknown[:3]}")
    sol = values_to_solution(model, values, inst)
    ev = evaluate(inst, sol)
    if not ev.feasible:
        raise ImportInfeasible(f"imported solution violates {ev.violations[:3]}")
    target = objective if objective is not None else file_obj
    if target is None:
        target = objective_value(model, values)
    if abs(ev.objective - target) > 1e-6 * max(1.0, abs(target)):
        raise ObjectiveMismatch(f"solution objective {ev.objective} != solver objective {target}")
    return sol


def write_values(values: dict[str, float], path: str | Path, objective: float | None = None) -> None:
    lines = [] if objective is None else [f"OBJ {objective!r}"]
    lines += [f"{k} {v!r}" for k, v in values.items() if v != 0.0]
    Path(path).write_text("\n".join(lines) + "\n")


# --- serialization ------------------------------------------------------------------

def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _expr(terms, wrap: int = 8) -> list[str]:
    parts = []
    for k, (name, coef) in enumerate(terms):
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = name if mag == 1 else f"{_num(mag)} {name}"
        if k == 0:
            parts.append(body if sign == "+" else f"- {body}")
        else:
            parts.append(f"{sign} {body}")
    if not parts:
        parts = ["0"]
    return [" ".join(parts[i:i + wrap]) for i in range(0, len(parts), wrap)]


def lp_text(model: MilpModel) -> str:
    lines = ["Minimize"]
    obj = [(n, c) for n, c in model.objective.items() if c != 0]
    body = _expr(obj)
    lines.append(" OBJ: " + body[0])
    lines += ["   " + b for b in body[1:]]
    lines.append("Subject To")
    for r in model.rows:
        body = _expr([(n, c) for n, c in r.terms if c != 0])
        op = {"<=": "<=", ">=": ">=", "=": "="}[r.sense]
        if len(body) == 1:
            lines.append(f" {r.name}: {body[0]} {op} {_num(r.rhs)}")
        else:
            lines.append(f" {r.name}: {body[0]}")
            lines += ["   " + b for b in body[1:-1]]
            lines.append(f"   {body[-1]} {op} {_num(r.rhs)}")
    bounds = []
    for v in model.variables.values():
        if v.binary and v.lb == 0 and v.ub == 1:
            continue
        if not v.binary and v.lb == 0 and v.ub == math.inf:
            continue
        ub = "+inf" if v.ub == math.inf else _num(v.ub)
        bounds.append(f" {_num(v.lb)} <= {v.name} <= {ub}")
    if bounds:
        lines.append("Bounds")
        lines += bounds
    bins = [v.name for v in model.variables.values() if v.binary]
    if bins:
        lines.append("Binaries")
        lines += [" " + " ".join(bins[i:i + 10]) for i in range(0, len(bins), 10)]
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(model: MilpModel, path: str | Path) -> None:
    Path(path).write_text(lp_text(model))


def mps_text(model: MilpModel) -> str:
    """Free-form MPS: names are longer than the fixed format's 8 characters."""
    sense = {"<=": "L", ">=": "G", "=": "E"}
    name = re.sub(r"\s+", "_", model.name) or "model"
    lines = [f"NAME {name}", "ROWS", " N OBJ"]
    lines += [f" {sense[r.sense]} {r.name}" for r in model.rows]
    cols: dict[str, list[tuple[str, float]]] = {n: [] for n in model.variables}
    for n, c in model.objective.items():
        if c != 0:
            cols[n].append(("OBJ", c))
    for r in model.rows:
        for n, c in r.terms:
            if c != 0:
                cols[n].append((r.name, c))
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for name, var in model.variables.items():
        if var.binary and not in_int:
            lines.append(f" MARKER{marker} 'MARKER' 'INTORG'")
            in_int = True
        elif not var.binary and in_int:
            lines.append(f" MARKER{marker} 'MARKER' 'INTEND'")
            marker += 1
            in_int = False
        entries = cols[name] or [("OBJ", 0.0)]
        for rname, c in entries:
            lines.append(f" {name} {rname} {_num(c)}")
    if in_int:
        lines.append(f" MARKER{marker} 'MARKER' 'INTEND'")
    lines.append("RHS")
    lines += [f" RHS {r.name} {_num(r.rhs)}" for r in model.rows if r.rhs != 0]
    lines.append("BOUNDS")
    for v in model.variables.values():
        if v.binary and v.lb == 0 and v.ub == 1:
            lines.append(f" BV BND {v.name}")
            continue
        if v.lb == v.ub:
            lines.append(f" FX BND {v.name} {_num(v.lb)}")
            continue
        if v.lb != 0:
            lines.append(f" LO BND {v.name} {_num(v.lb)}")
        if v.ub != math.inf:
            lines.append(f" UP BND {v.name} {_num(v.ub)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def write_mps(model: MilpModel, path: str | Path) -> None:
    Path(path).write_text(mps_text(model))


_KEYWORDS = {"minimize", "subject", "to", "bounds", "binaries", "end", "inf", "+inf", "obj:"}


def lp_variable_names(path: str | Path) -> set[str]:
    """Variable names appearing in an LP file written by :func:`write_lp`."""
    names: set[str] = set()
    for line in Path(path).read_text().splitlines():
        text = line.strip()
        if not text or text in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
            continue
        if ":" in text:
            text = text.split(":", 1)[1]
        for tok in text.split():
            if tok.lower() in _KEYWORDS or tok in ("+", "-", "<=", ">=", "="):
                continue
            try:
                float(tok)
            except ValueError:
                names.add(tok)
    return names


# --- CMSA restriction -----------------------------------------------------------------

def fixings(model: MilpModel, allowed_arcs=None, allowed_assign=None) -> list[str]:
    """Names of y/z variables outside the allowed component sets.

    ``allowed_arcs`` are (id, id) pairs of physical nodes between consecutive
    non-station stops; ``allowed_assign`` are (customer id, satellite id)
    pairs. Arcs touching stations and truck arcs stay free.
    """
    exp = model.inst
    by_label = {n.label: n for n in model.nodes}

    def pid(n: MNode) -> str:
        return exp.nodes[n.index].physical

    out = []
    for name in model.variables:
        if name.startswith("y_") and allowed_arcs is not None:
            _, a, b = name.split("_")
            na, nb = by_label[a], by_label[b]
            if na.kind == "R" or nb.kind == "R":
                continue
            if (pid(na), pid(nb)) not in allowed_arcs:
                out.append(name)
        elif name.startswith("z_") and allowed_assign is not None:
            _, c, s = name.split("_")
            nc, ns = by_label[c], by_label[s]
            if nc.kind == "C" and (pid(nc), pid(ns)) not in allowed_assign:
                out.append(name)
    return out


def write_fixing(names, path: str | Path) -> None:
    Path(path).write_text("".join(f"{n} 0\n" for n in names))


def read_fixing(path: str | Path) -> dict[str, float]:
    values, _ = _read_values(path)
    return values


def restrict(model: MilpModel, fixed: dict[str, float]) -> MilpModel:
    """Copy of ``model`` with the given variables fixed through their bounds."""
    variables = dict(model.variables)
    for name, val in fixed.items():
        v = variables[name]
        variables[name] = Var(v.name, val, val, v.binary, v.family)
    return MilpModel(model.name, model.inst, model.nodes, variables, list(model.rows),
                     dict(model.objective), model.big_m)


def highs_runner(lp_path: Path, out_path: Path, time_limit: float) -> None:
    """Solve an LP file with HiGHS (optional ``highspy``) and write ``name value`` lines."""
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", float(max(time_limit, 0.1)))
    h.readModel(str(lp_path))
    h.run()
    if h.getInfo().primal_solution_status != 2:
        raise MilpError(f"no feasible MILP solution ({h.modelStatusToString(h.getModelStatus())})")
    values = {}
    col_values = h.getSolution().col_value
    for k, val in enumerate(col_values):
        name = h.getColName(k)[1]
        values[name] = float(round(val)) if name.split("_")[0] in ("x", "y", "z") else val
    write_values(values, out_path, h.getInfo().objective_function_value)
