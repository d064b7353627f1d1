import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvarflp.indicators import (IndicatorError, eps_indicator, hypervolume, hypervolume_gap, nondominated,
                                reference_point, report, reports_csv, union)
from cvarflp.oracles import hypervolume_grid

pairs = st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=8)


def test_hypervolume_examples():
    assert hypervolume([(1, 3), (3, 1)], (4, 4)) == 5
    assert hypervolume([(1, 1)], (2, 2)) == 1
    assert hypervolume([], (2, 2)) == 0


def test_hypervolume_rejects_points_outside_reference():
    with pytest.raises(IndicatorError):
        hypervolume([(5, 1)], (4, 4))


def test_gap_examples():
    r = [(1, 3), (3, 1)]
    assert hypervolume_gap(r, r, (4, 4)) == 0
    assert hypervolume_gap([(1, 3)], r, (4, 4)) == pytest.approx(40.0)
    assert hypervolume_gap([(1, 2), (3, 0.5)], r, (4, 4)) < 0


def test_eps_examples():
    assert eps_indicator([(2, 4)], [(1, 2)], shift=0) == 2
    assert eps_indicator([(0.5, 1)], [(1, 1)], shift=0) == 1
    r = [(0, 9), (5, 2)]
    assert eps_indicator(r, r) == 1


def test_eps_shift_handles_zero_coordinates():
    assert eps_indicator([(0, 3)], [(0, 1)]) == pytest.approx(2.0)
    with pytest.raises(IndicatorError):
        eps_indicator([(0, 3)], [(0, 1)], shift=0)
    with pytest.raises(IndicatorError):
        eps_indicator([], [(1, 1)])


def test_nondominated_and_union():
    assert nondominated([(3, 1), (1, 3), (2, 3), (1, 3), (4, 1)]) == [(1, 3), (3, 1)]
    assert union([(1, 3)], [(2, 2), (3, 3)]) == [(1, 3), (2, 2)]


def test_reference_point():
    assert reference_point([(1, 3)], [(3, 1)]) == (4, 4)
    with pytest.raises(IndicatorError):
        reference_point([])


@settings(max_examples=100, deadline=None)
@given(pairs)
def test_hypervolume_matches_grid(points):
    ref = reference_point(points)
    assert hypervolume(points, ref) == pytest.approx(hypervolume_grid(points, ref))


@settings(max_examples=100, deadline=None)
@given(pairs, pairs)
def test_indicator_properties(a, r):
    rep = report(a, r)
    assert report(r, r).gH_percent == 0 and report(r, r).I_eps == 1
    # adding points to A never lowers its hypervolume
    both = report(union(a, r), r, rep.reference_point)
    assert both.hypervolume_A >= rep.hypervolume_A - 1e-9
    assert both.I_eps <= 1 + 1e-12
    assert rep.I_eps > 0


def test_report_and_csv():
    rep = report([(1, 3)], [(1, 3), (3, 1)], (4, 4))
    assert (rep.hypervolume_A, rep.hypervolume_R, rep.gH_percent) == (3, 5, pytest.approx(40.0))
    text = reports_csv([("a", rep)])
    header, row = text.strip().split("\n")
    assert header.startswith("label,hypervolume_A")
    assert row.split(",")[0] == "a"
    assert '"gH_percent": 40.0' in rep.to_json()
    with pytest.raises(IndicatorError):
        report([(1, 1)], [])


def test_gap_sign_for_lower_bound_sets():
    rng = np.random.default_rng(1)
    for _ in range(20):
        r = [(float(c), float(v)) for c, v in zip(range(0, 50, 10), sorted(rng.uniform(0, 100, 5))[::-1])]
        lower = [(c, v * 0.9) for c, v in r]
        assert hypervolume_gap(lower, r) <= 0
        assert eps_indicator(lower, r) <= 1
