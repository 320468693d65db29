import math

import pytest

from evrp2e.instance import (
    DistancePolicy, InstanceError, MalformedFile, MissingFleetParameter, NodeRole,
    OddDemandUnderIntegerSplit, PdTransformConfig, UnknownNode, UnknownNodeRole, Variant,
    apply_pd_transform, convert_schneider, copies_of, dumps_instance, expand_copies,
    load_instance, loads_instance, parse_instance, zero_pickups,
)

from oracles import path
from tiny import make

HEADER = """NAME: t
Q1: 100
Q2: 50
B: 40
h: 1
g: 2
id role x y delivery pickup ready due service
D0 d 0 0 0 0 0 500 0
S1 s 3 4 0 0 0 500 0
"""


def test_five_customer_file():
    inst = parse_instance(path("C101_C5x"))
    assert inst.n_customers == 5
    assert len(inst.satellites) == 1
    assert inst.name == "C101_C5x"


def test_fifteen_customer_file_has_two_satellites():
    assert len(parse_instance(path("C103_C15x")).satellites) == 2


def test_large_file():
    inst = parse_instance(path("C101_21x"))
    assert inst.n_customers == 100
    assert len(inst.satellites) == 8
    assert len(inst.stations) == 21


def test_round_trip_is_identical():
    for name in ("C101_C5x", "R202_C15", "RC101_21x"):
        for variant in ("base", "tw", "spd"):
            inst = parse_instance(path(name), variant)
            again = loads_instance(dumps_instance(inst), variant)
            assert again == inst


def test_variant_drops_unused_fields():
    base = parse_instance(path("C101_C5"))
    tw = parse_instance(path("C101_C5"), "tw")
    spd = parse_instance(path("C101_C5"), "spd")
    assert all(n.pickup == 0 for n in base.nodes)
    assert any(n.pickup > 0 for n in spd.nodes)
    assert {n.due for n in base.nodes} == {base.horizon}
    assert len({n.due for n in tw.nodes}) > 1


def test_default_distance_policy():
    assert parse_instance(path("C101_C5")).distance_policy is DistancePolicy.ROUND_HALF_UP
    assert parse_instance(path("C101_C5"), "tw").distance_policy is DistancePolicy.EXACT


def test_distance_examples():
    exact = make(satellites=[(3, 4)], policy="exact")
    assert exact.distance("D0", "S1") == 5.0
    ceil = make(satellites=[(1, 1)], policy="ceil")
    assert ceil.distance("D0", "S1") == 2.0
    rnd = make(satellites=[(1, 1)], policy="round")
    assert rnd.distance("D0", "S1") == 1.0


def test_round_half_up_at_half():
    assert DistancePolicy.ROUND_HALF_UP.apply(2.5) == 3.0
    assert DistancePolicy.ROUND_HALF_UP.apply(3.5) == 4.0


def test_distance_symmetric():
    inst = parse_instance(path("RC108_C15x"))
    n = len(inst.nodes)
    for i in range(n):
        for j in range(n):
            assert inst.dist[i][j] == inst.dist[j][i]


def test_unknown_node():
    inst = parse_instance(path("C101_C5x"))
    with pytest.raises(UnknownNode):
        inst.node("C99")


def test_missing_fleet_parameter():
    text = HEADER.replace("Q2: 50\n", "") + "C1 c 1 1 5 0 0 500 0\n"
    with pytest.raises(MissingFleetParameter):
        loads_instance(text)


def test_unknown_role():
    with pytest.raises(UnknownNodeRole):
        loads_instance(HEADER + "X1 z 1 1 5 0 0 500 0\n")


def test_bad_column_count():
    with pytest.raises(MalformedFile):
        loads_instance(HEADER + "C1 c 1 1 5\n")


def test_file_needs_customers():
    with pytest.raises(MalformedFile):
        loads_instance(HEADER)


def test_header_count_mismatch():
    with pytest.raises(MalformedFile):
        loads_instance("CUSTOMERS: 2\n" + HEADER + "C1 c 1 1 5 0 0 500 0\n")


def test_negative_demand_rejected():
    with pytest.raises(InstanceError):
        loads_instance(HEADER + "C1 c 1 1 -5 0 0 500 0\n")


def test_pd_equal_split():
    inst = make([(1, 1, 10)])
    pd = apply_pd_transform(inst)
    got = [(n.id, n.delivery, n.origin) for n in pd.nodes if n.role is NodeRole.CUSTOMER]
    assert got == [("C1.1", 5.0, "C1"), ("C1.2", 5.0, "C1")]
    assert pd.variant is Variant.PD


def test_pd_rate_split():
    pd = apply_pd_transform(make([(1, 1, 10)]), PdTransformConfig(20))
    assert [n.delivery for n in pd.nodes if n.role is NodeRole.CUSTOMER] == [2.0, 8.0]


def test_pd_odd_demand():
    pd = apply_pd_transform(make([(1, 1, 7)]))
    assert [n.delivery for n in pd.nodes if n.role is NodeRole.CUSTOMER] == [4.0, 3.0]
    with pytest.raises(OddDemandUnderIntegerSplit):
        apply_pd_transform(make([(1, 1, 7)]), PdTransformConfig(strict=True))


def test_pd_rate_bounds():
    for bad in (19, 51, "half"):
        with pytest.raises(InstanceError):
            PdTransformConfig(bad)


def test_pd_conserves_demand_on_fixtures():
    for name in ("C101_C5x", "R203_C10x", "RC108_C15x", "C101_21x"):
        inst = parse_instance(path(name))
        for rate in ("equal", 20, 33, 50, "random"):
            pd = apply_pd_transform(inst, PdTransformConfig(rate, rng_seed=3))
            assert pd.total_delivery() == inst.total_delivery()
            assert pd.n_customers == 2 * inst.n_customers


def test_pd_twice_rejected():
    pd = apply_pd_transform(make([(1, 1, 10)]))
    with pytest.raises(InstanceError):
        apply_pd_transform(pd)


def test_load_instance_pd_applies_transform():
    inst = load_instance(path("C101_C5x"), "pd")
    assert inst.n_customers == 10
    assert {inst.nodes[i].origin for i in inst.customers} == {f"C{k}" for k in range(1, 6)}


def test_expand_copies():
    inst = make([(1, 1, 1)], stations=[(2, 2), (3, 3)], sat_copies=2, sta_copies=3)
    exp = expand_copies(inst)
    sats = [exp.nodes[i] for i in exp.satellites]
    assert [s.id for s in sats] == ["S1#1", "S1#2"]
    assert {(s.x, s.y) for s in sats} == {(10.0, 0.0)}
    assert len(exp.stations) == 6
    assert copies_of(exp)["F2"] == ["F2#1", "F2#2", "F2#3"]
    assert expand_copies(exp) is exp


def test_expand_single_copy_is_identity_up_to_ids():
    inst = make([(1, 1, 1)], stations=[(2, 2)], sat_copies=1, sta_copies=1)
    exp = expand_copies(inst)
    assert [n.physical for n in exp.nodes] == [n.id for n in inst.nodes]
    assert exp.dist == inst.dist


def test_copy_counts_must_be_positive():
    with pytest.raises(InstanceError):
        make(sat_copies=0)


def test_zero_pickups():
    inst = zero_pickups(parse_instance(path("C101_C5x"), "spd"))
    assert all(n.pickup == 0 for n in inst.nodes)


def test_travel_time_uses_velocity():
    inst = make(satellites=[(3, 4)], policy="exact")
    assert inst.travel_time[0][1] == 5.0
    assert math.isinf(make().horizon)


def test_convert_schneider():
    text = """StringID Type x y demand ReadyTime DueDate ServiceTime
D0 d 40 50 0 0 1236 0
S1 s 45 45 0 0 1236 0
S5 f 40 50 0 0 1236 0
C1 c 45 68 10 912 967 90

Q Vehicle fuel tank capacity /77.75/
C Vehicle load capacity /200.0/
r fuel consumption rate /1.0/
g inverse refueling rate /3.47/
v average Velocity /1.0/
"""
    inst = loads_instance(convert_schneider(text, name="x", Q1=300), "tw")
    assert inst.fleet.battery == 77.75
    assert inst.fleet.q2 == 200.0
    assert inst.fleet.q1 == 300
    assert inst.node("C1").ready == 912
