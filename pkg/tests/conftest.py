"""Shared fixtures and pure-Python reference solvers.

The reference solvers deliberately avoid numpy and the package's own oracle so
that every comparison has two independent routes.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import strategies as st

from streamsplit.stream import Dataset, Mode


def ref_regression(xs, ys, N=None, all_splits=False):
    """(j, loss) by direct enumeration; exact rational arithmetic, smallest j on ties."""
    pts = [(int(x), Fraction(float(y))) for x, y in zip(xs, ys)]
    m = len(pts)
    cands = range(1, N + 1) if all_splits else sorted({x for x, _ in pts})
    best = None
    for j in cands:
        total = Fraction(0)
        for side in ([y for x, y in pts if x <= j], [y for x, y in pts if x > j]):
            if side:
                mean = sum(side) / len(side)
                total += sum((v - mean) ** 2 for v in side)
        loss = total / m
        if best is None or loss < best[1]:
            best = (j, loss)
    return best[0], float(best[1])


def ref_classification(xs, ys, N=None, all_splits=False):
    m = len(xs)
    cands = range(1, N + 1) if all_splits else sorted(set(int(x) for x in xs))
    best = None
    for j in cands:
        wrong = 0
        for keep in (lambda x: x <= j, lambda x: x > j):
            labels = [y for x, y in zip(xs, ys) if keep(x)]
            wrong += min(labels.count(1), labels.count(-1))
        if best is None or wrong < best[1]:
            best = (j, wrong)
    return best[0], best[1] / m


def ref_categorical(xs, ys, N):
    """Minimum over every partition with category 1 in A, lexicographically first A on ties."""
    m = len(xs)
    best = None
    rest = list(range(2, N + 1))
    subsets = []
    for r in range(len(rest) + 1):
        subsets.extend((1,) + c for c in itertools.combinations(rest, r))
    for A in sorted(subsets):
        a = set(A)
        wrong = 0
        for inside in (True, False):
            labels = [y for x, y in zip(xs, ys) if (x in a) == inside]
            wrong += min(labels.count(1), labels.count(-1))
        if best is None or wrong < best[1]:
            best = (frozenset(A), wrong)
    return best[0], best[1] / m


def random_regression(rng, m, N, M=1.0, levels=None):
    x = rng.integers(1, N + 1, size=m)
    if levels:
        y = rng.choice(np.linspace(0, M, levels), size=m)
    else:
        y = rng.random(m) * M
    return Dataset(x, y, N, Mode.REGRESSION, M=M)


def random_labelled(rng, m, N, mode=Mode.CLASSIFICATION, bias=None):
    x = rng.integers(1, N + 1, size=m)
    prob = rng.random(N + 1) if bias is None else np.full(N + 1, bias)
    y = np.where(rng.random(m) < prob[x], 1, -1)
    return Dataset(x, y, N, mode)


@st.composite
def regression_datasets(draw, max_m=40, max_N=12, grid=True):
    N = draw(st.integers(1, max_N))
    m = draw(st.integers(1, max_m))
    xs = draw(st.lists(st.integers(1, N), min_size=m, max_size=m))
    if grid:
        ys = draw(st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]), min_size=m, max_size=m))
    else:
        ys = draw(st.lists(st.floats(0, 1, allow_nan=False), min_size=m, max_size=m))
    return Dataset(xs, ys, N, Mode.REGRESSION, M=1.0)


@st.composite
def labelled_datasets(draw, max_m=40, max_N=12, mode=Mode.CLASSIFICATION):
    N = draw(st.integers(1, max_N))
    m = draw(st.integers(1, max_m))
    xs = draw(st.lists(st.integers(1, N), min_size=m, max_size=m))
    ys = draw(st.lists(st.sampled_from([-1, 1]), min_size=m, max_size=m))
    return Dataset(xs, ys, N, mode)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def close(a, b, tol=1e-9):
    return math.isclose(a, b, rel_tol=0, abs_tol=tol)
