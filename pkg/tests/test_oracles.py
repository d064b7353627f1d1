import pytest

from cvarflp.cvar import cvar_topk
from cvarflp.instance import GeneratorParams, Instance, ScenarioSet, generate_instance
from cvarflp.oracles import (OracleBudget, OracleRefusal, cvar_enumerate, exact_frontier, hypervolume_grid,
                             hypervolume_monte_carlo, second_stage_enumerate, separate_enumerate)

from fixtures import toy


def test_cvar_enumerate():
    assert cvar_enumerate([10, 20, 30, 40], 2) == 35
    assert cvar_enumerate([1, 2, 6], 3) == 3
    assert cvar_enumerate([7] * 5, 2) == 7


def test_separate_enumerate():
    halves = [5, 10, 15, 20]
    assert separate_enumerate(halves, 2, 30) == (True, 35)
    assert separate_enumerate(halves, 2, 35) == (False, 35)


def test_refusal():
    with pytest.raises(OracleRefusal):
        cvar_enumerate(list(range(13)), 2)
    inst, scen = generate_instance(1, 20, 2)
    with pytest.raises(OracleRefusal):
        exact_frontier(inst, scen, 1)
    with pytest.raises(OracleRefusal):
        second_stage_enumerate(inst, (0,) * inst.n_sites, scen.demand[0], OracleBudget(max_demand_nodes=5))


def test_second_stage_cases():
    inst, scen = toy()
    assert second_stage_enumerate(inst, (1,), (3, 4)) == 2
    assert second_stage_enumerate(inst, (0,), (3, 4)) == 7
    big, _ = toy(capacity=100)
    assert second_stage_enumerate(big, (1,), (3, 4)) == 0


def test_second_stage_packing():
    # one site of capacity 10 and demands 6, 5, 4: best packing 6 + 4
    inst = Instance((1, 2, 3), ((0, 0), (1, 0), (2, 0)), (1, 2, 3), (1,), (1,), (10,), 6.0)
    assert second_stage_enumerate(inst, (1,), (6, 5, 4)) == 5


def test_exact_frontier_without_sites():
    inst = Instance((1, 2), ((0, 0), (1, 0)), (1, 2), (), (), (), 6.0)
    scen = ScenarioSet(((3, 4), (1, 1)))
    fr = exact_frontier(inst, scen, 1)
    assert fr.as_pairs() == [(0.0, 7.0)]


def test_exact_frontier_toy():
    inst, scen = toy(scenarios=((3, 4), (1, 1)))
    fr = exact_frontier(inst, scen, 1)
    assert fr.as_pairs() == [(0.0, 7.0), (5000.0, 2.0)]
    assert [p.y for p in fr] == [(0,), (1,)]


def test_exact_frontier_is_sorted_and_exact():
    inst, scen = generate_instance(3, 9, 4, GeneratorParams(n_sites=3))
    fr = exact_frontier(inst, scen, 2)
    assert fr.points[0].cost == 0
    assert fr.points[0].risk == cvar_topk(scen.totals, 2)
    assert all(p.provenance == "exact" for p in fr)


def test_monte_carlo_and_grid():
    pts = [(1, 3), (3, 1)]
    assert hypervolume_grid(pts, (4, 4)) == 5
    est, se = hypervolume_monte_carlo(pts, (4, 4), samples=20000, seed=1)
    assert abs(est - 5) <= 4 * se
    assert hypervolume_monte_carlo([], (4, 4)) == (0.0, 0.0)
