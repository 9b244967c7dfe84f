import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamsplit.errors import InputError
from streamsplit.oracle import oracle_regression, regression_loss_at
from streamsplit.regression import (DistinctValueAccumulators, additive_split_2pass, bucket_aggregates_pass,
                                    build_candidates, evaluate_buckets, evaluate_probes, exact_split_1pass,
                                    multiplicative_split, multiplicative_split_lowpass, side_errors)
from streamsplit.sketch import sample_pass
from streamsplit.stream import (Dataset, GeneratorSpec, StreamHandle, toy_classification,
                                toy_regression, generate, with_deletions)

from conftest import random_regression, ref_regression, regression_datasets


def _handle(ds, chunk_size=None):
    return StreamHandle(ds) if chunk_size is None else StreamHandle(ds, chunk_size=chunk_size)


# --------------------------------------------------------------------- exact

def test_exact_toy():
    h = _handle(toy_regression())
    e = exact_split_1pass(h)
    assert e.j == 4 and math.isclose(e.loss, 4 / 7, abs_tol=1e-12)
    assert h.passes_used == 1 and h.peak_words == 4 * 9


@settings(max_examples=150, deadline=None)
@given(regression_datasets(), st.integers(1, 7))
def test_exact_matches_reference(ds, chunk):
    e = exact_split_1pass(_handle(ds, chunk))
    j, loss = ref_regression(ds.x.tolist(), ds.y.tolist())
    assert e.j == j and math.isclose(e.loss, loss, abs_tol=1e-12)


def test_exact_handles_deletions():
    ds = generate(GeneratorSpec("piecewise-step", 400, 40, noise=0.2, seed=3))
    turn = with_deletions(ds, 0.4, seed=2)
    e = exact_split_1pass(_handle(turn))
    res = oracle_regression(turn.net())
    assert e.j == res.best.j and math.isclose(e.loss, res.opt, abs_tol=1e-12)


def test_accumulators_drop_cancelled_keys():
    acc = DistinctValueAccumulators()
    acc.add([3, 5], [0.5, 0.25])
    acc.add([3], [0.5], [-1])
    assert acc.keys.tolist() == [5] and acc.words == 4


def test_wrong_mode_rejected():
    with pytest.raises(InputError, match="regression"):
        exact_split_1pass(_handle(toy_classification()))


def test_side_errors_empty_side():
    mean, err = side_errors([0, 2], [0, 3], [0, 5])
    assert mean.tolist() == [0, 1.5] and err.tolist() == [0, 0.5]


# ---------------------------------------------------------------- candidates

def _exact_counts(x):
    x = np.sort(np.asarray(x))
    return lambda a, b: float(np.searchsorted(x, b, "right") - np.searchsorted(x, a, "left"))


def test_candidates_large_eps():
    c = build_candidates(lambda a, b: b - a + 1, 1.0, 100, 100)
    assert c.splits.tolist() == [0, 100] and c.k == 1


def test_candidates_uniform_line():
    x = np.arange(1, 101)
    c = build_candidates(_exact_counts(x), 0.1, 100, 100)
    assert c.bucket_counts(x).max() <= 11
    assert c.splits[0] == 0 and c.splits[-1] == 100
    assert c.k <= 16 / 0.1 + 4


def test_candidates_heavy_value_is_isolated():
    x = np.concatenate([np.arange(1, 51), np.full(500, 30)])
    c = build_candidates(_exact_counts(x), 0.1, len(x), 50)
    assert 29 in c.splits and 30 in c.splits
    assert c.gap_ok(x, len(x))


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(1, 300), min_size=1, max_size=400), st.sampled_from([0.02, 0.05, 0.1, 0.3, 0.6]))
def test_candidates_with_exact_counts(x, eps):
    N = 300
    m = len(x)
    c = build_candidates(_exact_counts(x), eps, m, N)
    assert c.k <= 16 / eps + 4
    assert np.all(np.diff(c.splits) > 0) and c.splits[0] == 0 and c.splits[-1] == N
    # with exact counts a multi-value bucket stops short of 2 eps m points
    counts = c.bucket_counts(x)
    single = np.diff(c.splits) == 1
    assert np.all(single | (counts < 2 * eps * m))


def test_gap_property_from_samples():
    ds = generate(GeneratorSpec("uniform-noise", 20000, 500, seed=5))
    eps = 0.1
    bad = 0
    for seed in range(20):
        sample = sample_pass(_handle(ds), 64 * math.log(500) / (eps * ds.m), seed, label_aware=False)
        c = build_candidates(sample.range_count, eps, ds.m, ds.N)
        bad += not c.gap_ok(ds.x, ds.m)
    assert bad <= 1


def test_bucket_aggregates_global_and_evaluation():
    ds = toy_regression()
    agg = bucket_aggregates_pass(_handle(ds), [0, 4, 10])
    assert agg.A.tolist() == [7, 7]
    evals = evaluate_buckets(agg, ds.m)
    assert evals[0].j == 4 and math.isclose(evals[0].loss, 4 / 7)
    assert math.isclose(evals[1].loss, regression_loss_at(ds, 10).loss)


# ------------------------------------------------------------------ additive

def test_additive_toy_uses_two_passes():
    h = _handle(toy_regression())
    e = additive_split_2pass(h, 0.1, seed=0)
    assert h.passes_used == 2
    ds = toy_regression()
    assert e.loss <= 4 / 7 + 5 * 0.1 * ds.M ** 2
    assert math.isclose(e.loss, regression_loss_at(ds, e.j).loss, abs_tol=1e-12)


def test_additive_exact_when_optimum_is_a_candidate():
    # one point per value: with eps m < 1 every value becomes a candidate
    ds = Dataset(np.arange(1, 11), [0.0] * 4 + [1.0] * 6, 10, M=1.0)
    e = additive_split_2pass(_handle(ds), 0.05)
    assert e.j == 4 and e.loss == 0.0


def test_additive_noiseless_step():
    ds = generate(GeneratorSpec("piecewise-step", 5000, 1000, step=400, seed=2))
    e = additive_split_2pass(_handle(ds), 0.05, seed=1)
    assert e.loss <= 5 * 0.05 * ds.M ** 2
    assert math.isclose(e.loss, regression_loss_at(ds, e.j).loss, abs_tol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_additive_bound(seed):
    rng = np.random.default_rng(seed)
    ds = random_regression(rng, 3000, 400, M=2.0)
    eps = 0.1
    h = _handle(ds)
    e = additive_split_2pass(h, eps, seed=seed)
    opt = oracle_regression(ds).opt
    assert e.loss <= opt + 5 * eps * ds.M ** 2
    assert math.isclose(e.loss, regression_loss_at(ds, e.j).loss, abs_tol=1e-9)
    assert h.passes_used == 2


def test_additive_with_deletions():
    ds = generate(GeneratorSpec("piecewise-step", 2000, 256, noise=0.1, seed=7))
    turn = with_deletions(ds, 0.3, seed=1)
    h = _handle(turn)
    e = additive_split_2pass(h, 0.2, seed=4)
    net = turn.net()
    assert h.passes_used == 2
    assert e.loss <= oracle_regression(net).opt + 5 * 0.2 * net.M ** 2
    assert math.isclose(e.loss, regression_loss_at(net, e.j).loss, abs_tol=1e-9)


def test_additive_rejects_bad_eps():
    with pytest.raises(InputError):
        additive_split_2pass(_handle(toy_regression()), 1.5)


# ------------------------------------------------------------ multiplicative

def test_probe_errors_match_direct_evaluation(rng):
    ds = random_regression(rng, 500, 60, M=3.0)
    probes = np.array([1, 7, 30, 59, 60])
    h = _handle(ds, 37)
    ev = evaluate_probes(h, probes)
    assert h.passes_used == 2
    for i, j in enumerate(probes):
        direct = regression_loss_at(ds, int(j))
        assert math.isclose(ev.err_left[i], direct.err_left, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(ev.err_right[i], direct.err_right, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(ev.mu[i], direct.mu, abs_tol=1e-12)


def test_probe_errors_survive_large_offsets():
    # labels near M with a tiny spread: raw moments would cancel catastrophically
    x = np.arange(1, 201)
    y = 1e6 - 1e-3 * (x % 3)
    ds = Dataset(x, y, 200, M=1e6)
    ev = evaluate_probes(_handle(ds), np.array([100]))
    assert math.isclose(ev.err_left[0], regression_loss_at(ds, 100).err_left, rel_tol=1e-6)


def test_multiplicative_toy():
    for fn in (lambda h: multiplicative_split(h, 0.1), lambda h: multiplicative_split_lowpass(h, 0.1, 0.5)):
        e = fn(_handle(toy_regression()))
        assert e.j == 4 and math.isclose(e.loss, 4 / 7, abs_tol=1e-12)


@settings(max_examples=60, deadline=None)
@given(regression_datasets(max_m=50, max_N=40, grid=False), st.sampled_from([0.05, 0.2, 0.5]))
def test_multiplicative_bound_and_passes(ds, eps):
    h = _handle(ds)
    e = multiplicative_split(h, eps)
    opt = oracle_regression(ds, all_splits=True).opt
    assert e.loss <= (1 + eps) * opt + 1e-9
    assert h.passes_used <= 2 * (math.ceil(math.log2(ds.N)) + 1)


@settings(max_examples=60, deadline=None)
@given(regression_datasets(max_m=50, max_N=64, grid=False), st.sampled_from([0.1, 0.5]),
       st.sampled_from([0.2, 0.5, 0.9]))
def test_lowpass_bound_and_passes(ds, eps, beta):
    h = _handle(ds)
    e = multiplicative_split_lowpass(h, eps, beta)
    opt = oracle_regression(ds, all_splits=True).opt
    assert e.loss <= (1 + eps) * opt + 1e-9
    assert h.passes_used <= 2 * math.ceil(1 / beta) + 2


def test_lowpass_single_phase_when_tree_covers_domain():
    ds = generate(GeneratorSpec("piecewise-step", 2000, 64, noise=0.2, seed=9))
    h = _handle(ds)
    multiplicative_split_lowpass(h, 0.1, 0.99)
    assert h.passes_used == 2


def test_lowpass_pass_count_large_domain():
    ds = generate(GeneratorSpec("uniform-noise", 5000, 4096, seed=1))
    h = _handle(ds)
    e = multiplicative_split_lowpass(h, 0.2, 0.5)
    assert h.passes_used <= 6
    assert e.loss <= 1.2 * oracle_regression(ds, all_splits=True).opt + 1e-9


def test_multiplicative_noiseless_step_is_exact():
    ds = generate(GeneratorSpec("piecewise-step", 1000, 256, step=77, seed=3))
    e = multiplicative_split(_handle(ds), 0.1)
    assert e.loss <= 1e-9 and regression_loss_at(ds, e.j).loss == 0.0


def test_multiplicative_with_deletions():
    ds = generate(GeneratorSpec("piecewise-step", 800, 100, noise=0.3, seed=5))
    turn = with_deletions(ds, 0.3, seed=8)
    e = multiplicative_split(_handle(turn), 0.1)
    assert e.loss <= 1.1 * oracle_regression(turn.net(), all_splits=True).opt + 1e-9
