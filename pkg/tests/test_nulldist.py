import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from combrank.cre import RankSumStatistic
from combrank.nulldist import (
    MONTE_CARLO,
    DesignSpec,
    EnumerationCapError,
    NullDistribution,
    assignment_matrix,
    build_null,
    calibrate_min_p,
    draw_assignments,
    substream,
)
from combrank.oracle import all_assignments, brute_tail
from combrank.ranks import RankTransform


def test_wilcoxon_null_for_four_choose_two():
    nd = build_null(RankSumStatistic(RankTransform.identity()), DesignSpec.cre(4, 2))
    assert nd.values.tolist() == [3, 4, 5, 5, 6, 7]
    assert nd.tail(6) == pytest.approx(2 / 6)
    assert nd.cdf(4) == pytest.approx(2 / 6)


@pytest.mark.parametrize("strata", [((5, 2),), ((4, 2), (3, 1)), ((3, 1), (3, 2), (2, 1))])
def test_enumeration_matches_itertools(strata):
    d = DesignSpec(strata)
    Z = assignment_matrix(d)
    assert Z.shape[0] == d.count()
    ours = sorted(map(tuple, Z.tolist()))
    ref = sorted(tuple(z.tolist()) for z in all_assignments(strata))
    assert ours == ref


def test_enumeration_cap():
    with pytest.raises(EnumerationCapError):
        assignment_matrix(DesignSpec.cre(30, 15), cap=1000)


def test_degenerate_stratum_rejected():
    with pytest.raises(ValueError):
        assignment_matrix(DesignSpec(((3, 3),)))


def test_draws_respect_strata():
    d = DesignSpec(((5, 2), (4, 3)))
    Z = draw_assignments(d, 500, substream(1, "x"))
    assert np.all(Z[:, :5].sum(axis=1) == 2)
    assert np.all(Z[:, 5:].sum(axis=1) == 3)


def test_substreams_are_labelled_and_reproducible():
    a = substream(3, "a", 1).random(4)
    assert np.array_equal(a, substream(3, "a", 1).random(4))
    assert not np.array_equal(a, substream(3, "a", 2).random(4))


def test_monte_carlo_uses_add_one_estimator():
    nd = NullDistribution(np.arange(9.0), MONTE_CARLO)
    assert nd.tail(100.0) == pytest.approx(1 / 10)
    assert nd.tail(8.0) == pytest.approx(2 / 10)
    assert nd.cdf(-1.0) == pytest.approx(1 / 10)


def test_monte_carlo_null_is_seeded():
    stat = RankSumStatistic(RankTransform.stephenson(3))
    d = DesignSpec.cre(20, 10)
    a = build_null(stat, d, mode=MONTE_CARLO, draws=300, seed=5)
    b = build_null(stat, d, mode=MONTE_CARLO, draws=300, seed=5)
    assert np.array_equal(a.values, b.values)


def test_calibrate_min_p_is_cdf():
    nd = NullDistribution(np.array([0.1, 0.2, 0.2, 0.5]))
    assert calibrate_min_p(nd, 0.2) == pytest.approx(0.75)


@settings(max_examples=60)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=20), st.integers(-1, 7))
def test_tail_matches_counting(vals, c):
    nd = NullDistribution(np.array(vals, float))
    assert nd.tail(c) == pytest.approx(brute_tail(vals, c))
    assert nd.cdf(c) == pytest.approx(1 - brute_tail(vals, c + 0.5))


@settings(max_examples=40)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=15))
def test_tail_is_nonincreasing(vals):
    nd = NullDistribution(np.array(vals))
    grid = np.linspace(-6, 6, 25)
    t = nd.tail(grid)
    assert np.all(np.diff(t) <= 0)
    assert t[0] == 1.0


def test_exact_null_total_count():
    d = DesignSpec(((6, 3), (4, 2)))
    nd = build_null(RankSumStatistic(RankTransform.identity()), DesignSpec.cre(6, 3))
    assert nd.size == math.comb(6, 3)
    assert d.count() == 20 * 6
