import glob
from pathlib import Path

import pytest

from evrp2e.construct import ConstructConfig, ConstructionFailed, Heuristic, best_of, construct
from evrp2e.instance import load_instance
from evrp2e.solution import evaluate

from oracles import BASE_5, INSTANCES, path
from tiny import make

SMALL = sorted(glob.glob(str(INSTANCES / "*_C5x.txt")) + glob.glob(str(INSTANCES / "*_C10x.txt"))
               + glob.glob(str(INSTANCES / "*_C15x.txt")))
TW_FILES = sorted(glob.glob(str(INSTANCES / "*_C5.txt")) + glob.glob(str(INSTANCES / "*_C10.txt"))
                  + glob.glob(str(INSTANCES / "*_C15.txt")))


@pytest.mark.parametrize("heuristic", list(Heuristic))
@pytest.mark.parametrize("variant", ["base", "spd", "pd"])
def test_every_small_fixture_feasible(variant, heuristic):
    for f in SMALL:
        inst = load_instance(f, variant)
        for seed in range(3):
            s = construct(inst, ConstructConfig(heuristic=heuristic, rng_seed=seed))
            assert evaluate(inst, s).feasible, (Path(f).stem, seed)


@pytest.mark.parametrize("heuristic", list(Heuristic))
def test_every_tw_fixture_feasible(heuristic):
    for f in TW_FILES:
        inst = load_instance(f, "tw")
        for seed in range(3):
            s = construct(inst, ConstructConfig(heuristic=heuristic, rng_seed=seed))
            assert evaluate(inst, s).feasible, (Path(f).stem, seed)


def test_large_fixture_feasible():
    inst = load_instance(path("R101_21x"))
    assert evaluate(inst, construct(inst)).feasible


def test_same_seed_same_solution():
    inst = load_instance(path("RC108_C15x"), "spd")
    cfg = ConstructConfig(determinism_rate=0.5, rng_seed=11)
    assert construct(inst, cfg) == construct(inst, cfg)


def test_greedy_never_beats_oracle():
    for name, opt in BASE_5.items():
        inst = load_instance(path(name))
        obj = evaluate(inst, construct(inst, ConstructConfig(determinism_rate=1.0))).objective
        assert obj >= opt - 1e-9


def test_best_of_single_run_is_construct():
    inst = load_instance(path("R105_C5x"))
    cfg = ConstructConfig(rng_seed=4)
    best, stats = best_of(inst, cfg, runs=1)
    assert best == construct(inst, cfg)
    assert stats.best == stats.mean


def test_best_of_order_statistic():
    inst = load_instance(path("R203_C10x"))
    best, stats = best_of(inst, ConstructConfig(determinism_rate=0.6), runs=10)
    assert len(stats.values) == 10
    assert stats.best == min(stats.values) <= stats.mean
    assert evaluate(inst, best).objective == stats.best


def test_best_of_needs_a_run():
    with pytest.raises(ValueError):
        best_of(load_instance(path("C101_C5x")), runs=0)


def test_config_validation():
    with pytest.raises(ValueError):
        ConstructConfig(determinism_rate=1.5)
    with pytest.raises(ValueError):
        ConstructConfig(candidate_list_size=0)


def test_unservable_customer():
    with pytest.raises(ConstructionFailed):
        construct(make([(10, 3, 60)], q2=50))
    with pytest.raises(ConstructionFailed):
        construct(make([(300, 0, 1)], battery=100))


def test_no_customers_gives_empty_solution():
    s = construct(make())
    assert s.routes == ()


def test_station_needed_is_inserted():
    # 40 out and back exceeds a battery of 60 without the station half way
    inst = make([(50, 0, 1)], stations=[(30, 0)], battery=60, policy="exact")
    s = construct(inst)
    assert evaluate(inst, s).feasible
    assert "F1" in s.second_echelon[0].stops
