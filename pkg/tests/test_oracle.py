import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamsplit.errors import GuardViolation, InputError
from streamsplit.oracle import (best_partition, categorical_loss, check_monotonicity, check_split_shift,
                                classification_loss_at, first_min, label_counts_at, lexicographic_first,
                                oracle, oracle_categorical, oracle_classification, oracle_regression,
                                regression_loss_at, split_shift_bound, subset_stats, subset_sums)
from streamsplit.stream import Dataset, Mode, toy_classification, toy_regression

from conftest import (labelled_datasets, random_labelled, random_regression, ref_categorical,
                      ref_classification, ref_regression, regression_datasets)

# Frozen from the exact-rational reference solver in conftest.
SMALL_REG = ([3, 1, 4, 1, 5, 9, 2, 6, 5, 3], [0.5, 0.25, 1.0, 0.0, 0.75, 0.5, 0.25, 1.0, 0.0, 0.5])
SMALL_REG_OPT = (2, Fraction(13, 168))
SMALL_CLS = ([2, 7, 7, 1, 8, 2, 8, 1, 8, 2, 8], [1, -1, 1, 1, -1, 1, -1, 1, 1, -1, -1])
SMALL_CLS_OPT = (2, Fraction(3, 11))
SMALL_CAT = ([1, 2, 3, 4, 1, 2, 3, 4, 2, 3, 3], [1, -1, 1, -1, 1, -1, -1, -1, 1, 1, 1])
SMALL_CAT_OPT = ({1, 3}, Fraction(2, 11))


def test_toy_regression_optimum():
    res = oracle_regression(toy_regression())
    b = res.best
    assert b.j == 4
    assert math.isclose(b.loss, 4 / 7, abs_tol=1e-12)
    assert (b.mu, b.gamma, b.err_left, b.err_right) == (7.0, 2.0, 4.0, 4.0)


def test_toy_classification_optimum():
    res = oracle_classification(toy_classification())
    assert res.best.j == 4
    assert math.isclose(res.opt, 3 / 13, abs_tol=1e-15)
    assert res.best.counts.as_tuple() == (5, 2, 1, 5)
    assert (res.best.left_label, res.best.right_label) == (-1, 1)


def test_frozen_regression_value():
    ds = Dataset(*SMALL_REG, N=9, M=1.0)
    res = oracle_regression(ds)
    assert res.best.j == SMALL_REG_OPT[0]
    assert math.isclose(res.opt, float(SMALL_REG_OPT[1]), abs_tol=1e-15)


def test_frozen_classification_value():
    ds = Dataset(*SMALL_CLS, N=8, mode=Mode.CLASSIFICATION)
    res = oracle_classification(ds)
    assert res.best.j == SMALL_CLS_OPT[0] and res.opt == float(SMALL_CLS_OPT[1])


def test_frozen_categorical_value():
    ds = Dataset(*SMALL_CAT, N=4, mode=Mode.CATEGORICAL)
    res = oracle_categorical(ds)
    assert set(res.best.A) == SMALL_CAT_OPT[0] and res.opt == float(SMALL_CAT_OPT[1])
    assert res.best.A | res.best.B == {1, 2, 3, 4} and not res.best.A & res.best.B


def test_constant_labels_give_zero_at_smallest_value():
    ds = Dataset([5, 3, 9, 3], [0.4] * 4, N=10, M=1)
    res = oracle_regression(ds)
    assert res.opt == 0.0 and res.best.j == 3


def test_empty_dataset_rejected():
    with pytest.raises(InputError, match="empty"):
        oracle_regression(Dataset([], [], 4))


def test_full_curve_minimum_is_opt():
    ds = toy_regression()
    res = oracle_regression(ds, all_splits=True, curve=True)
    assert len(res.full_curve) == 10
    assert min(v for _, v in res.full_curve) == res.opt
    # j = N puts everything on the left
    assert res.full_curve[-1][1] == regression_loss_at(ds, 10).loss


def test_label_counts_toy():
    c = label_counts_at(toy_classification(), 4)
    assert c.as_tuple() == (5, 2, 1, 5) and c.total == 13 and c.misclassified == 3


def test_categorical_separable_and_even():
    sep = Dataset([1, 1, 2, 2, 3], [1, 1, -1, -1, 1], N=3, mode=Mode.CATEGORICAL)
    res = oracle_categorical(sep)
    assert res.opt == 0.0 and res.best.A == frozenset({1, 3})
    even = Dataset([1, 1, 2, 2], [1, -1, 1, -1], N=2, mode=Mode.CATEGORICAL)
    assert oracle_categorical(even).opt == 0.5


def test_categorical_guard():
    ds = Dataset([1, 30], [1, -1], N=30, mode=Mode.CATEGORICAL)
    with pytest.raises(GuardViolation):
        oracle_categorical(ds)


def test_oracle_dispatch():
    assert oracle(toy_regression()).best.j == 4
    assert oracle(toy_classification()).best.j == 4


def test_first_min_prefers_earliest_near_tie():
    assert first_min([0.3, 0.1 + 1e-17, 0.1]) == 1
    assert first_min([2.0, 1.0, 1.0 + 1e-6]) == 1


def test_subset_sums_and_lexicographic_choice():
    assert subset_sums(np.array([1, 2, 4])).tolist() == list(range(8))
    # masks {1,3} = 0b101 and {1,2} = 0b011 -> (1,2) < (1,3)
    assert lexicographic_first(np.array([0b101, 0b011]), 3) == 0b011
    # {1} is a prefix of {1,2}
    assert lexicographic_first(np.array([0b011, 0b001]), 3) == 0b001


def test_best_partition_scale():
    A, B, v = best_partition(np.array([4, 0]), np.array([0, 4]), scale=0.5)
    assert A == frozenset({1}) and B == frozenset({2}) and v == 0.0
    A, B, v = best_partition(np.array([2, 1]), np.array([1, 2]), scale=3.0)
    assert v == 6.0


# ------------------------------------------------------------- equivalences

@settings(max_examples=150, deadline=None)
@given(regression_datasets())
def test_regression_oracle_matches_rational_reference(ds):
    j, loss = ref_regression(ds.x.tolist(), ds.y.tolist())
    res = oracle_regression(ds)
    assert res.best.j == j and math.isclose(res.opt, loss, abs_tol=1e-12)


@settings(max_examples=80, deadline=None)
@given(regression_datasets(max_m=15, max_N=6))
def test_all_splits_regression_matches_reference(ds):
    j, loss = ref_regression(ds.x.tolist(), ds.y.tolist(), ds.N, all_splits=True)
    res = oracle_regression(ds, all_splits=True)
    assert res.best.j == j and math.isclose(res.opt, loss, abs_tol=1e-12)


@settings(max_examples=150, deadline=None)
@given(labelled_datasets())
def test_classification_oracle_matches_reference(ds):
    j, loss = ref_classification(ds.x.tolist(), ds.y.tolist())
    res = oracle_classification(ds)
    assert res.best.j == j and res.opt == loss
    c = res.best.counts
    assert c.total == ds.m


@settings(max_examples=100, deadline=None)
@given(labelled_datasets(max_N=7, mode=Mode.CATEGORICAL))
def test_categorical_oracle_matches_reference(ds):
    A, loss = ref_categorical(ds.x.tolist(), ds.y.tolist(), ds.N)
    res = oracle_categorical(ds)
    assert res.best.A == A and math.isclose(res.opt, loss, abs_tol=1e-15)
    assert math.isclose(categorical_loss(ds, res.best.A), res.opt, abs_tol=1e-15)


@settings(max_examples=100, deadline=None)
@given(labelled_datasets())
def test_classification_loss_bounded(ds):
    for j in range(1, ds.N + 1):
        e = classification_loss_at(ds, j)
        assert 0 <= e.loss <= 0.5 + 1 / ds.m


# ------------------------------------------------------ structural properties

def test_monotonicity_examples():
    assert check_monotonicity([1, 2, 3, 10], [1, 2, 3])
    assert check_monotonicity([5], [])
    with pytest.raises(InputError):
        check_monotonicity([1, 2], [3])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=30), st.data())
def test_monotonicity_property(values, data):
    mask = data.draw(st.lists(st.booleans(), min_size=len(values), max_size=len(values)))
    sub = [v for v, k in zip(values, mask) if k]
    assert check_monotonicity(values, sub)


def test_subset_stats_empty():
    assert subset_stats([]) == (0.0, 0.0)


def test_split_shift_on_toy():
    lhs, rhs, b = split_shift_bound(toy_regression(), 4, 6)
    assert b == 3 and lhs <= rhs
    assert check_split_shift(toy_regression(), 4, 6)
    with pytest.raises(InputError):
        split_shift_bound(toy_regression(), 6, 6)


@settings(max_examples=200, deadline=None)
@given(regression_datasets(grid=False), st.data())
def test_split_shift_property(ds, data):
    if ds.N < 2:
        return
    j = data.draw(st.integers(0, ds.N - 1))
    j2 = data.draw(st.integers(j + 1, ds.N))
    assert check_split_shift(ds, j, j2)


def test_split_shift_tight_regime(rng):
    # extreme labels stress the bound
    for _ in range(50):
        ds = random_regression(rng, 30, 8, M=1.0, levels=2)
        for j, j2 in itertools.combinations(range(0, 9), 2):
            assert check_split_shift(ds, j, j2)


def test_random_labelled_helper(rng):
    ds = random_labelled(rng, 50, 5)
    assert set(ds.y.tolist()) <= {-1, 1}
