import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvarflp.cvar import (CutPool, SubsetCutFamily, cvar_topk, delayed_cut_loop, initial_cut, make_separator,
                          separate, top_k_indices)
from cvarflp.formulations import build_mb, evaluate_uncovered_vector
from cvarflp.instance import GeneratorParams, RiskSpec, ScenarioSet, generate_instance
from cvarflp.milp import MilpModel, solve_lp
from cvarflp.oracles import cvar_enumerate


@pytest.mark.parametrize("k, expected", [(2, 35.0), (4, 25.0), (1, 40.0)])
def test_cvar_topk(k, expected):
    assert cvar_topk([10, 20, 30, 40], k) == expected


def test_cvar_topk_rejects_bad_k():
    with pytest.raises(ValueError):
        cvar_topk([1, 2], 0)
    with pytest.raises(ValueError):
        cvar_topk([1, 2], 3)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 500), min_size=1, max_size=9), st.data())
def test_cvar_topk_is_largest_subset_mean(values, data):
    k = data.draw(st.integers(1, len(values)))
    assert cvar_topk(values, k) == pytest.approx(cvar_enumerate(values, k), abs=1e-9)
    idx = top_k_indices(values, k)
    assert sum(values[i] for i in idx) / k == pytest.approx(cvar_topk(values, k), abs=1e-9)


def test_top_k_tie_break():
    assert top_k_indices([5, 5, 5], 2) == (0, 1)


@pytest.mark.parametrize("rho, expected", [(30.0, (2, 3)), (35.0, None), (100.0, None)])
def test_separate(rho, expected):
    halves = [v / 2 for v in (10, 20, 30, 40)]
    assert separate(halves, 2, rho) == expected


def test_initial_cut():
    scen = ScenarioSet(((5, 2), (3, 6), (1, 4)))
    assert initial_cut(scen, 1) == (1,)
    same = ScenarioSet(((1, 1),) * 3)
    assert initial_cut(same, 2) == (0, 1)
    assert initial_cut(scen, 3) == (0, 1, 2)


def test_cut_rows():
    u = np.array([[1, 2, 3]])
    fam = SubsetCutFamily([10, 20, 30], 2, u, 0)
    assert fam.size == 3
    cut = fam.cut([2, 0])
    assert cut.subset == (0, 2)
    x = np.array([0.0, 4.0, 0.0, 6.0])
    # rho=0, losses (6, 20, 24): subset {0, 2} mean 15
    assert cut.row.violation(x) == pytest.approx(15.0)
    with pytest.raises(ValueError):
        fam.cut([0, 0])
    assert len(list(fam.all_cuts())) == 3


def test_pool_and_separator():
    u = np.array([[1, 2]])
    fam = SubsetCutFamily([10, 4], 1, u, 0)
    pool = CutPool()
    sep = make_separator(fam, pool)
    x = np.array([0.0, 0.0, 0.0])
    row = sep(x)
    assert row is not None and pool.subsets == [(0,)]
    assert sep(np.array([10.0, 0.0, 0.0])) is None
    assert pool.separator_calls == 2
    assert pool.max_loss(np.array([3.0, 9.0]), 1) == 3.0
    assert not pool.add(fam.cut([0]))


def test_separator_hint_pools_a_second_subset():
    u = np.array([[1, 2]])
    fam = SubsetCutFamily([10, 4], 1, u, 0)
    pool = CutPool()
    rows = make_separator(fam, pool, hint=lambda x: np.array([1.0, 8.0]))(np.zeros(3))
    assert len(rows) == 2 and pool.subsets == [(0,), (1,)]
    # a hint agreeing with the separated subset adds nothing
    pool = CutPool()
    rows = make_separator(fam, pool, hint=lambda x: np.array([9.0, 1.0]))(np.zeros(3))
    assert len(rows) == 1 and pool.subsets == [(0,)]


def test_all_cuts_lp_equals_topk():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 8))
        totals = rng.integers(0, 1000, size=n)
        k = int(rng.integers(1, n + 1))
        m = MilpModel()
        rho = m.add_var("rho", lb=-1e9)
        fam = SubsetCutFamily(totals, k, np.empty((0, n), dtype=np.int64), rho)
        for cut in fam.all_cuts():
            m.add_row(cut.row)
        m.set_objective({rho: 1.0})
        assert solve_lp(m).objective == pytest.approx(cvar_topk(totals, k), abs=1e-9)


def _small():
    inst, scen = generate_instance(4, 10, 4, GeneratorParams(n_sites=3))
    return inst, scen


def test_loop_on_two_scenarios_bounded_by_family():
    inst, scen = generate_instance(5, 8, 2, GeneratorParams(n_sites=2))
    flp = build_mb(inst, scen, RiskSpec(1, 2))
    pool = CutPool()
    m = flp.model.copy()
    m.set_objective({flp.layout.risk: 1.0})
    res, pool = delayed_cut_loop(m, flp.family, pool)
    assert res.status.has_solution
    assert len(pool) <= 2


def test_loop_rho_equals_topk_of_incumbent():
    inst, scen = _small()
    flp = build_mb(inst, scen, RiskSpec(2, 4))
    m = flp.model.copy()
    m.set_bounds(flp.layout.cost, ub=10000.5)
    m.set_objective({flp.layout.risk: 1.0})
    res, pool = delayed_cut_loop(m, flp.family, CutPool())
    y = flp.first_stage(res.x)
    vec = evaluate_uncovered_vector(inst, scen, y)
    assert res.value(flp.layout.risk) == pytest.approx(cvar_topk(vec, 2), abs=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_loop_with_seeded_pool_accepts_first_candidate(seed):
    inst, scen = generate_instance(seed, 10, 4, GeneratorParams(n_sites=3))
    flp = build_mb(inst, scen, RiskSpec(2, 4))
    m = flp.model.copy()
    m.set_bounds(flp.layout.cost, ub=5000.5)
    m.set_objective({flp.layout.risk: 1.0})
    first, pool = delayed_cut_loop(m, flp.family, CutPool())
    seeded = CutPool()
    for subset in pool.subsets:
        seeded.add(flp.family.cut(subset))
    again, seeded = delayed_cut_loop(m, flp.family, seeded)
    assert seeded.subsets == pool.subsets
    assert seeded.separator_calls == 1
    assert again.objective == pytest.approx(first.objective, abs=1e-6)
    assert again.objective == pytest.approx(cvar_topk(flp.losses(again.x), 2), abs=1e-6)


def test_family_size_brute_force():
    for n, k in itertools.product(range(1, 7), repeat=2):
        if k <= n:
            fam = SubsetCutFamily([1] * n, k, np.zeros((1, n), dtype=np.int64), 0)
            assert fam.size == len(list(itertools.combinations(range(n), k)))
