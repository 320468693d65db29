import random

import pytest

from evrp2e import vns
from evrp2e.construct import ConstructConfig, construct
from evrp2e.exact import exact_solve
from evrp2e.instance import Variant, load_instance
from evrp2e.solution import Route, Solution, evaluate
from evrp2e.vns import Flavor, VnsConfig, destroy_repair, local_search, shake, vns_solve, write_trace

from oracles import TW_5, path
from tiny import make


def obj(inst, s):
    return evaluate(inst, s).objective


def greedy(inst):
    return construct(inst, ConstructConfig(determinism_rate=1.0))


def test_zero_budget_returns_init():
    inst = load_instance(path("R203_C5"), "tw")
    init = greedy(inst)
    assert vns_solve(inst, init, VnsConfig(time_limit=0))[0] is init
    assert vns_solve(inst, init, VnsConfig(max_iterations=0))[0] is init


def test_optimal_init_is_kept():
    inst = load_instance(path("C101_C5"), "tw")
    opt, _ = exact_solve(inst)
    out, _ = vns_solve(inst, opt, VnsConfig(max_iterations=20))
    assert obj(inst, out) == pytest.approx(TW_5["C101_C5"])


def test_reaches_tw_oracle_from_savings():
    inst = load_instance(path("R203_C5"), "tw")
    init = greedy(inst)
    out, _ = vns_solve(inst, init, VnsConfig(max_iterations=50))
    assert obj(inst, out) == pytest.approx(TW_5["R203_C5"], abs=1e-6)


@pytest.mark.parametrize("flavor", list(Flavor))
def test_anytime_and_no_worsening(flavor):
    for name, variant in [("RC108_C10x", "base"), ("R202_C15", "tw"), ("C202_C15x", "spd")]:
        inst = load_instance(path(name), variant)
        init = construct(inst, ConstructConfig(rng_seed=2))
        for seed in range(3):
            out, trace = vns_solve(inst, init, VnsConfig(flavor=flavor, max_iterations=8, rng_seed=seed))
            assert evaluate(inst, out).feasible
            assert obj(inst, out) <= obj(inst, init) + 1e-9
            values = [v for _, v in trace]
            assert values == sorted(values, reverse=True)


def test_iteration_mode_is_deterministic():
    inst = load_instance(path("C104_C10x"))
    init = construct(inst, ConstructConfig(rng_seed=1))
    cfg = VnsConfig(max_iterations=10, rng_seed=5)
    assert vns_solve(inst, init, cfg) == vns_solve(inst, init, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        VnsConfig(k_max=0)
    with pytest.raises(ValueError):
        VnsConfig(neighborhood_order=("relocate", "teleport"))
    with pytest.raises(ValueError):
        VnsConfig(destroy_fraction=1.5)


def test_shake_is_deterministic_and_feasible():
    inst = load_instance(path("RC201_C10x"))
    s = construct(inst)
    a = shake(inst, s, 3, random.Random(9))
    b = shake(inst, s, 3, random.Random(9))
    assert a == b
    assert evaluate(inst, a).feasible


def test_shake_single_route():
    inst = make([(12, 1, 1), (12, -1, 1), (14, 2, 1), (8, 3, 1)], q2=100)
    s = construct(inst)
    assert len(s.second_echelon) == 1
    for k in range(1, 6):
        out = shake(inst, s, k, random.Random(k))
        assert evaluate(inst, out).feasible


def test_local_search_fixpoint():
    inst = load_instance(path("R103_C10x"))
    once = local_search(inst, construct(inst))
    assert local_search(inst, once) is once


def test_two_opt_uncrosses():
    # a square visited in crossing order
    inst = make([(20, 5, 1), (30, 5, 1), (20, -5, 1), (30, -5, 1)], q2=100, policy="exact")
    crossed = Solution((Route(1, ("D0", "S1", "D0")), Route(2, ("S1", "C1", "C4", "C2", "C3", "S1"))),
                       {f"C{k}": "S1" for k in range(1, 5)})
    assert evaluate(inst, crossed).feasible
    out = local_search(inst, crossed, order=("two_opt",))
    assert obj(inst, out) < obj(inst, crossed) - 1e-6


def test_station_remove():
    inst = make([(20, 0, 1)], stations=[(20, 8)], battery=100, policy="exact")
    detour = Solution((Route(1, ("D0", "S1", "D0")), Route(2, ("S1", "C1", "F1", "S1"))), {"C1": "S1"})
    assert evaluate(inst, detour).feasible
    out = local_search(inst, detour, order=("station_remove",))
    assert "F1" not in out.second_echelon[0].stops
    assert obj(inst, out) < obj(inst, detour)


def test_reassign_moves_customer_to_closer_satellite():
    inst = make([(0, 12, 1)], satellites=[(10, 0), (0, 10)], policy="exact")
    far = Solution((Route(1, ("D0", "S1", "D0")), Route(2, ("S1", "C1", "S1"))), {"C1": "S1"})
    out = local_search(inst, far)
    assert out.assignment == {"C1": "S2"}


def test_destroy_repair_zero_fraction_is_identity():
    inst = load_instance(path("C202_C10x"))
    s = construct(inst)
    assert destroy_repair(inst, s, 0.0, random.Random(0)) is s


def test_destroy_repair_output_feasible():
    inst = load_instance(path("RC204_C15"), "tw")
    s = construct(inst)
    for seed in range(5):
        for worst in (False, True):
            out = destroy_repair(inst, s, 0.3, random.Random(seed), worst)
            assert evaluate(inst, out).feasible


def test_destroy_repair_falls_back_on_failed_repair(monkeypatch):
    inst = load_instance(path("R104_C5"), "tw")
    s = construct(inst)

    def fail(self, plan, pool):
        raise vns.RepairFailed("no slot")

    monkeypatch.setattr(vns.Search, "reinsert", fail)
    assert destroy_repair(inst, s, 0.5, random.Random(0)) is s


def test_write_trace(tmp_path):
    write_trace([(0, 10.0), (3, 9.5)], tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == "time_or_iter,objective\n0,10.0\n3,9.5\n"


def test_wall_clock_budget_respected():
    import time

    inst = load_instance(path("C101_21x"))
    init = construct(inst)
    t0 = time.monotonic()
    out, _ = vns_solve(inst, init, VnsConfig(flavor=Flavor.RED, time_limit=3.0))
    assert time.monotonic() - t0 < 15
    assert evaluate(inst, out).feasible
    assert inst.variant is Variant.BASE
