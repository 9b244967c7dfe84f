"""Streaming regression splits: exact one-pass, two-pass additive, and the guess-grid searches."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .errors import InputError
from .oracle import SplitEvaluation, first_min
from .search import (GuessSearch, classify_guess_case, grid_axis, guess_grid,  # noqa: F401
                     lowpass_depth)
from .sketch import DEFAULT_C, sample_pass, sampling_rate, sketch_pass
from .stream import Mode, StreamHandle

__all__ = [
    "DistinctValueAccumulators", "exact_split_1pass", "CandidateSplitSet", "build_candidates",
    "BucketAggregates", "bucket_aggregates_pass", "evaluate_buckets", "additive_split_2pass",
    "guess_grid", "classify_guess_case", "ProbeErrors", "evaluate_probes",
    "multiplicative_split", "multiplicative_split_lowpass", "side_errors",
]

# Guesses below RESOLUTION * m are collapsed into the smallest positive grid value.
RESOLUTION = 1e-11
# Feasibility slack, relative to the largest possible error mass m M^2.
ERROR_RTOL = 1e-13


def _check_regression(handle: StreamHandle) -> None:
    if handle.dataset.mode is not Mode.REGRESSION:
        raise InputError(f"expected a regression stream, got {handle.dataset.mode.value}")
    if handle.meta.m < 1:
        raise InputError("empty stream")


def _check_eps(eps: float) -> None:
    if not 0 < eps < 1:
        raise InputError(f"eps must be in (0, 1), got {eps}")


def side_errors(A, B, C):
    """Means and squared-error sums of sides summarised by count, sum and square sum."""
    A, B, C = (np.asarray(v, dtype=np.float64) for v in (A, B, C))
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(A > 0, B / A, 0.0)
        err = np.where(A > 0, C - B * mean, 0.0)
    return mean, np.maximum(err, 0.0)


def _split_evals(splits: np.ndarray, left_A, left_B, left_C, tot, m: int) -> List[SplitEvaluation]:
    mu, el = side_errors(left_A, left_B, left_C)
    gamma, er = side_errors(tot[0] - left_A, tot[1] - left_B, tot[2] - left_C)
    return [SplitEvaluation(int(j), float(a), float(b), float(c), float(d), float((c + d) / m))
            for j, a, b, c, d in zip(splits, mu, gamma, el, er)]


# ------------------------------------------------------------- exact, 1 pass

class DistinctValueAccumulators:
    """Count, label sum and label square sum per distinct attribute value."""

    def __init__(self):
        self.keys = np.zeros(0, dtype=np.int64)
        self.A = np.zeros(0)
        self.B = np.zeros(0)
        self.C = np.zeros(0)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def words(self) -> int:
        return 4 * len(self.keys)

    def add(self, x, y, w=None) -> None:
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.float64)
        w = np.ones(len(x)) if w is None else np.asarray(w, dtype=np.float64)
        keys = np.union1d(self.keys, x)
        slot = np.searchsorted(keys, x)
        n = len(keys)
        A, B, C = np.zeros(n), np.zeros(n), np.zeros(n)
        old = np.searchsorted(keys, self.keys)
        A[old], B[old], C[old] = self.A, self.B, self.C
        A += np.bincount(slot, w, n)
        B += np.bincount(slot, w * y, n)
        C += np.bincount(slot, w * y * y, n)
        live = A != 0  # keys whose insertions were all deleted disappear
        self.keys, self.A, self.B, self.C = keys[live], A[live], B[live], C[live]


def exact_split_1pass(handle: StreamHandle) -> SplitEvaluation:
    """Optimal split over the distinct values, from per-value accumulators built in one pass."""
    _check_regression(handle)
    acc = DistinctValueAccumulators()
    for chunk in handle.next_pass():
        acc.add(chunk.x, chunk.y, chunk.w)
        handle.account(acc.words)
    m = int(round(acc.A.sum()))
    tot = (acc.A.sum(), acc.B.sum(), acc.C.sum())
    evals = _split_evals(acc.keys, np.cumsum(acc.A), np.cumsum(acc.B), np.cumsum(acc.C), tot, m)
    return evals[first_min([e.loss for e in evals])]


# ------------------------------------------------------------ additive, 2 passes

@dataclass(frozen=True)
class CandidateSplitSet:
    """Candidate splits ``0 = j_0 < ... < j_k = N``."""

    splits: np.ndarray
    eps: float
    iterations: int

    @property
    def k(self) -> int:
        return len(self.splits) - 1

    def bucket_counts(self, x) -> np.ndarray:
        """Number of values of ``x`` in each bucket ``(j_t, j_{t+1}]``."""
        t = np.searchsorted(self.splits, np.asarray(x), side="left") - 1
        return np.bincount(t, minlength=self.k)

    def gap_ok(self, x, m: int) -> bool:
        """Every bucket is a single value or holds fewer than ``4 eps m`` of ``x``."""
        counts = self.bucket_counts(x)
        single = np.diff(self.splits) == 1
        return bool(np.all(single | (counts < 4 * self.eps * m)))


def build_candidates(estimate: Callable[[int, int], float], eps: float, m: int, N: int) -> CandidateSplitSet:
    """Greedy candidate construction from a monotone range-count estimator ``estimate(a, b)``."""
    if not eps > 0:
        raise InputError("eps must be positive")
    if eps >= 1:
        return CandidateSplitSet(np.array([0, N], dtype=np.int64), eps, 0)
    threshold = eps * m
    S = {0}
    last = 0
    iterations = 0
    while True:
        iterations += 1
        j = last + 1
        if j > N or estimate(j, N) <= threshold:
            S.add(N)
            break
        lo, hi = j, N  # smallest j' with estimate(j, j') > threshold
        while lo < hi:
            mid = (lo + hi) // 2
            if estimate(j, mid) > threshold:
                hi = mid
            else:
                lo = mid + 1
        f = estimate(j, lo)
        if f >= 2 * threshold:
            S.update((lo - 1, lo))
        else:
            S.add(lo)
        last = lo
        if last == N:
            break
    splits = np.array(sorted(S), dtype=np.int64)
    if len(splits) - 1 > 16 / eps + 4:
        raise AssertionError(f"candidate set too large: {len(splits) - 1} > 16/eps + 4")
    return CandidateSplitSet(splits, eps, iterations)


@dataclass(frozen=True)
class BucketAggregates:
    """Count, label sum and label square sum per bucket ``(j_t, j_{t+1}]``."""

    splits: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def words(self) -> int:
        return 3 * len(self.A) + len(self.splits)


def bucket_aggregates_pass(handle: StreamHandle, splits) -> BucketAggregates:
    splits = np.asarray(splits, dtype=np.int64)
    k = len(splits) - 1
    A, B, C = np.zeros(k), np.zeros(k), np.zeros(k)
    for chunk in handle.next_pass():
        t = np.searchsorted(splits, chunk.x, side="left") - 1
        w = chunk.weights
        A += np.bincount(t, w, k)
        B += np.bincount(t, w * chunk.y, k)
        C += np.bincount(t, w * chunk.y * chunk.y, k)
    return BucketAggregates(splits, A, B, C)


def evaluate_buckets(agg: BucketAggregates, m: int) -> List[SplitEvaluation]:
    """L(j_t) for every candidate ``j_t > 0`` by prefix sums over the buckets."""
    tot = (agg.A.sum(), agg.B.sum(), agg.C.sum())
    return _split_evals(agg.splits[1:], np.cumsum(agg.A), np.cumsum(agg.B), np.cumsum(agg.C), tot, m)


def additive_split_2pass(handle: StreamHandle, eps: float, seed: int = 0, C: float = DEFAULT_C,
                         deletions: Optional[bool] = None) -> SplitEvaluation:
    """Split within ``5 eps M^2`` of optimal (with high probability) in two passes."""
    _check_regression(handle)
    _check_eps(eps)
    meta = handle.meta
    m, N = meta.m, meta.N
    if deletions is None:
        deletions = handle.dataset.has_deletions
    if deletions:
        sketch = sketch_pass(handle, eps / (8 * max(1.0, math.log2(N))), seed)[None]
        estimate, held = sketch.range_count, sketch.words
    else:
        sample = sample_pass(handle, sampling_rate(C, N, eps * m), seed, label_aware=False)
        estimate, held = sample.range_count, len(sample)
    cands = build_candidates(estimate, eps, m, N)
    handle.account(held + len(cands.splits))
    agg = bucket_aggregates_pass(handle, cands.splits)
    handle.account(held + agg.words)
    evals = evaluate_buckets(agg, m)
    return evals[first_min([e.loss for e in evals])]


# ------------------------------------------------------- guess-grid searches

@dataclass(frozen=True)
class ProbeErrors:
    probes: np.ndarray
    mu: np.ndarray
    gamma: np.ndarray
    err_left: np.ndarray
    err_right: np.ndarray
    m: int

    def evaluation(self, i: int) -> SplitEvaluation:
        el, er = float(self.err_left[i]), float(self.err_right[i])
        return SplitEvaluation(int(self.probes[i]), float(self.mu[i]), float(self.gamma[i]),
                               el, er, (el + er) / self.m)


def _prefix_suffix(v: np.ndarray):
    """Sums over buckets ``0..i`` and ``i+1..k`` for every probe ``i < k``."""
    k = len(v) - 1
    return np.cumsum(v)[:k], np.cumsum(v[::-1])[::-1][1:]


def evaluate_probes(handle: StreamHandle, probes) -> ProbeErrors:
    """Means and squared errors on both sides of every probe, in two passes.

    Pass one collects bucket counts and sums, which fix every probe's side means and
    every bucket's own mean ``c_t``. Pass two collects moments centred at ``c_t`` so
    that the errors come out without the cancellation of the raw-moment formula.
    """
    probes = np.asarray(probes, dtype=np.int64)
    k = len(probes)
    nb = k + 1
    A, B = np.zeros(nb), np.zeros(nb)
    for chunk in handle.next_pass():
        t = np.searchsorted(probes, chunk.x, side="left")
        w = chunk.weights
        A += np.bincount(t, w, nb)
        B += np.bincount(t, w * chunk.y, nb)
    handle.account(2 * nb + k)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(A > 0, B / A, 0.0)
    LA, RA = _prefix_suffix(A)
    LB, RB = _prefix_suffix(B)
    mu, _ = side_errors(LA, LB, LB)
    gamma, _ = side_errors(RA, RB, RB)

    S1, S2 = np.zeros(nb), np.zeros(nb)
    for chunk in handle.next_pass():
        t = np.searchsorted(probes, chunk.x, side="left")
        w = chunk.weights
        d = chunk.y - c[t]
        S1 += np.bincount(t, w * d, nb)
        S2 += np.bincount(t, w * d * d, nb)
    handle.account(5 * nb + k)

    ref = B.sum() / A.sum() if A.sum() > 0 else 0.0
    spread = A * (c - ref) ** 2
    left, right = zip(*(_prefix_suffix(v) for v in (A, S1, S2, c * S1, spread)))
    errs = []
    for (PA, PS1, PS2, PcS1, Psp), mean in ((left, mu), (right, gamma)):
        # sum over buckets of S2 + 2 (c_t - mean) S1 + A_t (c_t - mean)^2, the last term
        # rewritten around the global mean ``ref``
        e = PS2 + 2 * (PcS1 - mean * PS1) + Psp - PA * (mean - ref) ** 2
        errs.append(np.where(PA > 0, np.maximum(e, 0.0), 0.0))
    m = int(round(A.sum()))
    return ProbeErrors(probes, mu, gamma, errs[0], errs[1], m)


def _regression_search(handle: StreamHandle, eps: float, resolution: float, trace: bool) -> GuessSearch:
    _check_regression(handle)
    _check_eps(eps)
    meta = handle.meta
    scale = meta.m * meta.M * meta.M
    floor = min(1.0, resolution * meta.m)
    axis = grid_axis(scale, eps, floor)
    return GuessSearch(axis, axis, meta.N, tol=ERROR_RTOL * scale, trace=trace)


def _run_search(handle: StreamHandle, search: GuessSearch, levels: int) -> SplitEvaluation:
    while search.any_active():
        probes = search.midpoints() if levels == 1 else search.probe_tree(levels)
        ev = evaluate_probes(handle, probes)
        search.descend(levels, probes, ev.err_left, ev.err_right, ev.evaluation)
        handle.account(search.words + 7 * len(probes))
    _, _, best = search.best()
    return best


def multiplicative_split(handle: StreamHandle, eps: float, resolution: float = RESOLUTION,
                         search: Optional[GuessSearch] = None) -> SplitEvaluation:
    """Split with loss at most ``(1 + eps) opt``: one binary-search step (two passes) per round."""
    search = search or _regression_search(handle, eps, resolution, False)
    return _run_search(handle, search, 1)


def multiplicative_split_lowpass(handle: StreamHandle, eps: float, beta: float,
                                 resolution: float = RESOLUTION,
                                 search: Optional[GuessSearch] = None) -> SplitEvaluation:
    """As :func:`multiplicative_split`, but each two-pass phase resolves a whole probe tree."""
    levels = lowpass_depth(beta, handle.meta.N)
    search = search or _regression_search(handle, eps, resolution, False)
    return _run_search(handle, search, levels)
