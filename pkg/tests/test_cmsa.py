import importlib.util
import random

import pytest

from evrp2e import milp
from evrp2e.cmsa import (
    CmsaConfig, Component, Subsolver, _allowed, cmsa_solve, components_of, restricted_solve,
)
from evrp2e.construct import ConstructConfig, best_of, construct
from evrp2e.exact import exact_solve
from evrp2e.instance import load_instance
from evrp2e.solution import evaluate

from oracles import BASE_5, BASE_10, path

HAVE_HIGHS = importlib.util.find_spec("highspy") is not None


def obj(inst, s):
    return evaluate(inst, s).objective


def test_components_are_physical_and_skip_stations():
    inst = load_instance(path("R103_C10x"))
    s = construct(inst)
    comps = components_of(inst, s)
    assert {c.kind for c in comps} == {"arc1", "arc2", "assign"}
    assert not any("#" in c.a or "#" in c.b for c in comps)
    assert not any(c.kind == "arc2" and (c.a.startswith("F") or c.b.startswith("F")) for c in comps)
    assert sum(c.kind == "assign" for c in comps) == len(inst.customers)


@pytest.mark.parametrize("name", ["C205_C10x", "RC108_C10x", "R203_C10x"])
def test_dominates_best_of_constructions(name):
    inst = load_instance(path(name))
    cc = ConstructConfig(determinism_rate=0.6, rng_seed=0)
    cfg = CmsaConfig(max_iterations=4, construct_cfg=cc)
    out, trace = cmsa_solve(inst, cfg)
    assert evaluate(inst, out).feasible
    built, _ = best_of(inst, cc, runs=cfg.max_iterations * cfg.n_constructions_per_iter)
    assert obj(inst, out) <= obj(inst, built) + 1e-9
    assert obj(inst, out) >= BASE_10[name] - 1e-9
    values = [v for _, v in trace]
    assert values == sorted(values, reverse=True)


def test_iteration_mode_is_deterministic():
    inst = load_instance(path("RC201_C10x"))
    cfg = CmsaConfig(max_iterations=3, rng_seed=4)
    a = cmsa_solve(inst, cfg)
    b = cmsa_solve(inst, cfg)
    assert a == b
    assert cmsa_solve.last_stats.iterations == 3


def test_single_iteration():
    inst = load_instance(path("C101_C5x"))
    cfg = CmsaConfig(max_iterations=1, n_constructions_per_iter=1)
    out, trace = cmsa_solve(inst, cfg)
    assert evaluate(inst, out).feasible
    assert cmsa_solve.last_stats.constructions == 1
    assert len(cmsa_solve.last_stats.pool_sizes) == 1


def test_reaches_small_oracles():
    for name in ("C206_C5x", "R105_C5x", "RC204_C5x"):
        inst = load_instance(path(name))
        out, _ = cmsa_solve(inst, CmsaConfig(max_iterations=5))
        assert obj(inst, out) == pytest.approx(BASE_5[name])


def test_wall_clock_mode_stops():
    import time

    inst = load_instance(path("R102_C15x"))
    t0 = time.monotonic()
    out, _ = cmsa_solve(inst, CmsaConfig(total_time_limit=2.0))
    assert time.monotonic() - t0 < 10
    assert evaluate(inst, out).feasible


def test_restricted_single_solution_never_worse():
    inst = load_instance(path("R201_C10x"))
    s = construct(inst, ConstructConfig(rng_seed=5))
    comps = components_of(inst, s)
    out = restricted_solve(inst, comps, 1.0, seeds=[s], rng=random.Random(0), iterations=20)
    assert obj(inst, out) <= obj(inst, s) + 1e-9
    ev_side = {c for c in components_of(inst, out) if c.kind != "arc1"}
    assert ev_side <= comps


def test_restricted_union_beats_both_parents():
    inst = load_instance(path("C104_C10x"))
    a = construct(inst, ConstructConfig(rng_seed=1, determinism_rate=0.5))
    b = construct(inst, ConstructConfig(rng_seed=2, determinism_rate=0.5))
    comps = components_of(inst, a) | components_of(inst, b)
    out = restricted_solve(inst, comps, 5.0, Subsolver.EXACT_ORACLE, seeds=[a, b])
    assert obj(inst, out) <= min(obj(inst, a), obj(inst, b)) + 1e-9
    assert {c for c in components_of(inst, out) if c.kind != "arc1"} <= comps


def test_restricted_full_set_is_the_oracle():
    inst = load_instance(path("RC108_C5x"))
    cust = [inst.nodes[i].id for i in inst.customers]
    sats = [inst.nodes[i].id for i in inst.satellites]
    comps = {Component("arc2", a, b) for a in cust + sats for b in cust + sats if a != b}
    comps |= {Component("assign", c, s) for c in cust for s in sats}
    out = restricted_solve(inst, comps, 30.0, Subsolver.EXACT_ORACLE)
    assert obj(inst, out) == BASE_5["RC108_C5x"]


def test_restricted_without_seed_or_solution_raises():
    inst = load_instance(path("C101_C5x"))
    with pytest.raises(Exception):
        restricted_solve(inst, set(), 1.0, Subsolver.VNS_INNER)


def test_config_validation():
    with pytest.raises(ValueError):
        CmsaConfig(n_constructions_per_iter=0)
    with pytest.raises(ValueError):
        CmsaConfig(age_max=0)
    with pytest.raises(ValueError):
        CmsaConfig(total_time_limit=10, solver_time_slice=10)
    with pytest.raises(ValueError):
        CmsaConfig(subsolver="gurobi")
    assert CmsaConfig(total_time_limit=20).slice == pytest.approx(2.0)


def test_exact_subsolver_run():
    inst = load_instance(path("R104_C5x"))
    out, _ = cmsa_solve(inst, CmsaConfig(max_iterations=2, subsolver=Subsolver.EXACT_ORACLE,
                                         solver_time_slice=5.0))
    assert obj(inst, out) == BASE_5["R104_C5x"]


def _oracle_runner(inst):
    """Stands in for an external solver by writing the unrestricted optimum."""
    def run(lp_path, sol_path, limit):
        model = milp.build_model(inst)
        s, _ = exact_solve(inst)
        vals = milp.solution_to_values(model, s, inst)
        milp.write_values(vals, sol_path, milp.objective_value(model, vals))
    return run


def test_external_subsolver_with_fake_runner():
    inst = load_instance(path("C208_C5x"))
    calls = []

    def runner(lp_path, sol_path, limit):
        calls.append(limit)
        assert lp_path.read_text().startswith("Minimize")
        _oracle_runner(inst)(lp_path, sol_path, limit)

    out, _ = cmsa_solve(inst, CmsaConfig(max_iterations=1, subsolver=Subsolver.EXTERNAL_MILP,
                                         solver_time_slice=3.0, milp_runner=runner))
    assert calls == [3.0]
    assert obj(inst, out) == BASE_5["C208_C5x"]


def test_external_subsolver_failure_falls_back():
    inst = load_instance(path("C208_C5x"))

    def broken(lp_path, sol_path, limit):
        raise OSError("solver missing")

    out, _ = cmsa_solve(inst, CmsaConfig(max_iterations=2, subsolver=Subsolver.EXTERNAL_MILP,
                                         solver_time_slice=1.0, milp_runner=broken))
    assert evaluate(inst, out).feasible


@pytest.mark.skipif(not HAVE_HIGHS, reason="highspy not installed")
def test_external_subsolver_highs():
    inst = load_instance(path("RC105_C5x"))
    s = construct(inst)
    out = restricted_solve(inst, components_of(inst, s), 60.0, Subsolver.EXTERNAL_MILP, seeds=[s])
    assert obj(inst, out) <= obj(inst, s) + 1e-6
    arcs, assign = _allowed(inst, components_of(inst, s))
    ref, _ = exact_solve(inst, allowed_arcs=arcs, allowed_assign=assign)
    assert obj(inst, out) == pytest.approx(obj(inst, ref), rel=1e-6)
