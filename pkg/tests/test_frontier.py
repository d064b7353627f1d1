import math

import numpy as np
import pytest

from cvarflp.cvar import CutPool, cvar_topk
from cvarflp.formulations import build_ma, build_mb, evaluate_uncovered_vector
from cvarflp.frontier import (Frontier, FrontierPoint, balanced_box, epsilon_constraint, frontier_from_vectors,
                              matheuristic, reevaluate_frontier)
from cvarflp.indicators import eps_indicator, hypervolume_gap
from cvarflp.instance import GeneratorParams, Instance, RiskSpec, ScenarioSet, generate_instance
from cvarflp.oracles import exact_frontier

from fixtures import toy


def _three_site():
    return generate_instance(7, 10, 4, GeneratorParams(n_sites=3))


def _two_far_sites():
    """Nodes 1 and 2 host sites 100 km apart; demand (30, 30), (40, 0), (0, 45)."""
    inst = Instance((1, 2), ((0.0, 0.0), (100.0, 0.0)), (1, 2), (1, 2), (5000, 5000), (100, 100), 6.0)
    return inst, ScenarioSet(((30, 30), (40, 0), (0, 45)))


def test_frontier_order_is_enforced():
    with pytest.raises(ValueError):
        Frontier((FrontierPoint(0, 5, (0,)), FrontierPoint(5000, 5, (1,))))
    fr = Frontier.from_points([FrontierPoint(5000, 5, (1,)), FrontierPoint(0, 5, (0,)),
                               FrontierPoint(5000, 2, (1,))])
    assert fr.as_pairs() == [(0, 5), (5000, 2)]
    with pytest.raises(ValueError):
        FrontierPoint(0, 1, (0,), "guessed")


def test_json_round_trip(tmp_path):
    fr = Frontier.from_points([FrontierPoint(0, 7.5, (0, 0)), FrontierPoint(5000, 2.0, (1, 0), "approximate")])
    fr.save(tmp_path / "f.json")
    again = Frontier.load(tmp_path / "f.json")
    assert again == fr
    assert [p.provenance for p in again] == ["exact", "approximate"]


def test_toy_has_at_most_two_points():
    inst, scen = toy(scenarios=((3, 4), (1, 1)))
    fr = epsilon_constraint(build_ma(inst, scen, 0.5))
    assert fr.as_pairs() == [(0, 7), (5000, 2)]


@pytest.mark.parametrize("k", [1, 2, 4])
def test_three_site_fixture_matches_enumeration(k):
    inst, scen = _three_site()
    oracle = exact_frontier(inst, scen, k)
    ma = epsilon_constraint(build_ma(inst, scen, 1 - k / 4))
    mb = epsilon_constraint(build_mb(inst, scen, RiskSpec(k, 4)))
    assert ma.same_points(oracle) and mb.same_points(oracle)
    assert all(c % 5000 == 0 for c in ma.costs)
    assert ma.stats["status"] == "optimal"
    assert all(p.provenance == "exact" for p in mb)


def test_risks_are_multiples_of_one_over_k():
    inst, scen = _three_site()
    for p in epsilon_constraint(build_mb(inst, scen, RiskSpec(3, 4))):
        assert abs(p.risk * 3 - round(p.risk * 3)) < 1e-9


def test_balanced_box_matches_epsilon():
    inst, scen = _three_site()
    flp = build_ma(inst, scen, 0.5)
    assert set(balanced_box(flp).as_pairs()) == set(epsilon_constraint(flp).as_pairs())


def test_balanced_box_single_point():
    # opening the only site is free, so one point dominates everything
    inst = Instance((1, 2), ((0, 0), (1, 0)), (1, 2), (1,), (0,), (10,), 6.0)
    scen = ScenarioSet(((3, 4), (2, 2)))
    fr = balanced_box(build_ma(inst, scen, 0.5))
    assert fr.as_pairs() == [(0, 0)]


def test_flat_frontier_has_one_point():
    # the site covers nobody, so opening it never helps
    inst = Instance((1, 2), ((0, 0), (50, 0)), (1, 2), (1,), (5000,), (0,), 6.0)
    scen = ScenarioSet(((3, 4), (2, 2)))
    flp = build_ma(inst, scen, 0.5)
    assert balanced_box(flp).as_pairs() == [(0, 7)]
    assert epsilon_constraint(flp).as_pairs() == [(0, 7)]


def test_matheuristic_unlimited_budget_is_exact():
    inst, scen = _three_site()
    oracle = exact_frontier(inst, scen, 2)
    for flp in (build_ma(inst, scen, 0.5), build_mb(inst, scen, RiskSpec(2, 4))):
        fr = matheuristic(flp, per_point_budget=math.inf)
        assert fr.same_points(oracle)
        assert all(p.provenance == "exact" for p in fr)
    wide = matheuristic(build_ma(inst, scen, 0.5), per_point_budget=math.inf, kappa=inst.n_sites)
    assert wide.same_points(oracle)


def test_matheuristic_validation():
    inst, scen = toy()
    with pytest.raises(ValueError):
        matheuristic(build_ma(inst, scen, 0.0), per_point_budget=0)
    with pytest.raises(ValueError):
        matheuristic(build_ma(inst, scen, 0.0), kappa=0)


def test_matheuristic_never_beats_exact():
    inst, scen = generate_instance(11, 12, 5, GeneratorParams(n_sites=4))
    oracle = exact_frontier(inst, scen, 2)
    fr = matheuristic(build_ma(inst, scen, 0.6), per_point_budget=0.05)
    assert hypervolume_gap(fr, oracle) >= -1e-9
    assert eps_indicator(fr, oracle) >= 1 - 1e-12
    # reported risks are attained by the reported sites
    for p in fr:
        again = reevaluate_frontier(Frontier((p,)), inst, scen, k=2)
        assert p.risk >= again.points[0].risk - 1e-6


def test_bar_mode_needs_subset_model():
    inst, scen = toy()
    with pytest.raises(ValueError):
        epsilon_constraint(build_ma(inst, scen, 0.0), mode="bar")


def test_bar_frontier_is_a_lower_bound():
    inst, scen = _two_far_sites()
    bar = epsilon_constraint(build_mb(inst, scen, RiskSpec(1, 3)), mode="bar")
    assert bar.stats["separator_calls_after_first"] == 0
    # only the first (full-budget) point is solved against the whole family
    assert bar.points[-1].provenance == "exact"
    assert all(p.provenance == "approximate" for p in bar.points[:-1])
    assert bar.stats["status"] == "approximate"
    exact = epsilon_constraint(build_mb(inst, scen, RiskSpec(1, 3)))
    assert exact.as_pairs() == [(0, 60), (5000, 40), (10000, 0)]
    assert hypervolume_gap(bar, exact) <= 1e-9 and eps_indicator(bar, exact) <= 1 + 1e-9


def test_reevaluation_exposes_a_missed_scenario():
    inst, scen = _two_far_sites()
    flp = build_mb(inst, scen, RiskSpec(1, 3))
    pool = CutPool()
    pool.add(flp.family.cut([0]))
    # frozen values: the pool only knows scenario 0
    cands = []
    for y in [(0, 0), (1, 0), (1, 1)]:
        losses = np.array(evaluate_uncovered_vector(inst, scen, y), dtype=float)
        cands.append((y, pool.max_loss(losses, 1)))
    bar = frontier_from_vectors(inst, cands, "approximate")
    assert bar.as_pairs() == [(0, 60), (5000, 30), (10000, 0)]
    again = reevaluate_frontier(bar, inst, scen, k=1)
    assert again.as_pairs() == [(0, 60), (5000, 45), (10000, 0)]
    assert {p.provenance for p in again} == {"re-evaluated"}


def test_reevaluation_is_idempotent_on_exact_points():
    inst, scen = _three_site()
    fr = epsilon_constraint(build_mb(inst, scen, RiskSpec(2, 4)))
    assert reevaluate_frontier(fr, inst, scen, k=2).same_points(fr)
    assert reevaluate_frontier(fr, inst, scen, alpha=0.5).same_points(fr)
    with pytest.raises(ValueError):
        reevaluate_frontier(fr, inst, scen)


def test_reevaluated_closed_point():
    inst, scen = _three_site()
    fr = frontier_from_vectors(inst, [((0, 0, 0), 0.0)])
    again = reevaluate_frontier(fr, inst, scen, k=2)
    assert again.risks == [cvar_topk(scen.totals, 2)]


def test_time_limited_sweep_still_returns_valid_points():
    inst, scen = generate_instance(2, 21, 6, GeneratorParams(n_sites=5))
    fr = epsilon_constraint(build_mb(inst, scen, RiskSpec(2, 6)), time_limit_per_point=0.2)
    assert len(fr) >= 1
    for p in fr:
        again = reevaluate_frontier(Frontier((p,)), inst, scen, k=2)
        assert p.risk >= again.points[0].risk - 1e-6
