"""Streaming classification splits and the sampled categorical partition."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import GuardViolation, InputError
from .oracle import (CATEGORICAL_GUARD, CategoricalPartition, ClsSplitEvaluation, LabelRangeCounts,
                     best_partition)
from .search import GuessSearch, grid_axis, lowpass_depth
from .sketch import DEFAULT_C, SampleSet, sample_pass, sampling_rate, sketch_pass
from .stream import Mode, StreamHandle

__all__ = [
    "LabelRangeCounts", "EstimatedLossCurve", "estimated_loss_curve", "additive_cls_split_1pass",
    "exact_label_counts_pass", "multiplicative_cls_split", "multiplicative_cls_split_lowpass",
    "categorical_additive",
]


def _check(handle: StreamHandle, mode: Mode = Mode.CLASSIFICATION) -> None:
    if handle.dataset.mode is not mode:
        raise InputError(f"expected a {mode.value} stream, got {handle.dataset.mode.value}")
    if handle.meta.m < 1:
        raise InputError("empty stream")


def _check_eps(eps: float) -> None:
    if not 0 < eps < 1:
        raise InputError(f"eps must be in (0, 1), got {eps}")


def _evaluation(counts: LabelRangeCounts, m: float, exact: bool = True) -> ClsSplitEvaluation:
    left = 1 if counts.pos_left >= counts.neg_left else -1
    right = 1 if counts.pos_right >= counts.neg_right else -1
    return ClsSplitEvaluation(counts.j, left, right, counts.misclassified / m, exact, counts)


# ----------------------------------------------------------------- additive

@dataclass(frozen=True)
class EstimatedLossCurve:
    """Sampled label counts on both sides of every distinct sampled value, and the loss they imply."""

    j: np.ndarray
    neg_left: np.ndarray
    pos_left: np.ndarray
    neg_right: np.ndarray
    pos_right: np.ndarray
    p: float
    m: int

    @property
    def minority(self) -> np.ndarray:
        return np.minimum(self.neg_left, self.pos_left) + np.minimum(self.neg_right, self.pos_right)

    @property
    def loss(self) -> np.ndarray:
        return self.minority / (self.p * self.m)

    def best_index(self) -> int:
        return int(np.argmin(self.minority))

    def counts(self, i: int) -> LabelRangeCounts:
        return LabelRangeCounts(int(self.j[i]), int(self.neg_left[i]), int(self.pos_left[i]),
                                int(self.neg_right[i]), int(self.pos_right[i]))


def estimated_loss_curve(sample: SampleSet, m: int) -> EstimatedLossCurve:
    """Prefix and suffix label counts over the distinct sampled values."""
    values, inv = np.unique(sample.x, return_inverse=True)
    pos = sample.y > 0
    d = len(values)
    pos_at = np.bincount(inv, pos.astype(np.int64), d).astype(np.int64)
    neg_at = np.bincount(inv, (~pos).astype(np.int64), d).astype(np.int64)
    pos_left, neg_left = np.cumsum(pos_at), np.cumsum(neg_at)
    pos_right = int(pos_at.sum()) - pos_left
    neg_right = int(neg_at.sum()) - neg_left
    return EstimatedLossCurve(values, neg_left, pos_left, neg_right, pos_right, sample.p, m)


def _additive_with_deletions(handle: StreamHandle, eps: float, seed: int) -> ClsSplitEvaluation:
    meta = handle.meta
    N = meta.N
    sketches = sketch_pass(handle, eps / (24 * max(1.0, math.log2(N))), seed, labels=(-1, 1))
    neg, pos = sketches[-1], sketches[1]
    best = None
    for j in range(1, N + 1):
        c = LabelRangeCounts(j, int(neg.range_count(1, j)), int(pos.range_count(1, j)),
                             int(neg.range_count(j + 1, N)), int(pos.range_count(j + 1, N)))
        if best is None or c.misclassified < best.misclassified:
            best = c
    return _evaluation(best, meta.m, exact=False)


def additive_cls_split_1pass(handle: StreamHandle, eps: float, seed: int = 0, C: float = DEFAULT_C,
                             deletions: Optional[bool] = None) -> ClsSplitEvaluation:
    """Split within ``eps`` of the optimal misclassification rate (with high probability), one pass."""
    _check(handle)
    _check_eps(eps)
    if deletions is None:
        deletions = handle.dataset.has_deletions
    if deletions:
        return _additive_with_deletions(handle, eps, seed)
    meta = handle.meta
    sample = sample_pass(handle, sampling_rate(C, meta.N, eps * meta.m), seed)
    if len(sample) == 0:
        raise InputError("no element was sampled; increase C or eps")
    curve = estimated_loss_curve(sample, meta.m)
    handle.account(sample.words + 5 * len(curve.j))
    i = curve.best_index()
    return _evaluation(curve.counts(i), sample.p * meta.m, exact=sample.p >= 1.0)


# -------------------------------------------------------------- exact counts

def _label_counts_for(handle: StreamHandle, probes: np.ndarray):
    """Per-probe (neg_left, pos_left, neg_right, pos_right) arrays from one pass."""
    nb = len(probes) + 1
    neg, pos = np.zeros(nb, dtype=np.int64), np.zeros(nb, dtype=np.int64)
    for chunk in handle.next_pass():
        t = np.searchsorted(probes, chunk.x, side="left")
        w = np.ones(len(chunk), dtype=np.int64) if chunk.w is None else chunk.w.astype(np.int64)
        is_pos = chunk.y > 0
        pos += np.bincount(t[is_pos], w[is_pos], nb).astype(np.int64)
        neg += np.bincount(t[~is_pos], w[~is_pos], nb).astype(np.int64)
    handle.account(2 * nb + len(probes))
    neg_left, pos_left = np.cumsum(neg)[:-1], np.cumsum(pos)[:-1]
    return neg_left, pos_left, int(neg.sum()) - neg_left, int(pos.sum()) - pos_left


def exact_label_counts_pass(handle: StreamHandle, j: Union[int, Sequence[int]]):
    """Exact label counts on both sides of ``j`` (or of every split in a list), in one pass."""
    single = np.isscalar(j)
    js = np.atleast_1d(np.asarray(j, dtype=np.int64))
    N = handle.meta.N
    if np.any((js < 1) | (js > N)):
        raise InputError(f"split out of range [1, {N}]")
    probes, inv = np.unique(js, return_inverse=True)
    nl, pl, nr, pr = _label_counts_for(handle, probes)
    out = [LabelRangeCounts(int(js[i]), int(nl[k]), int(pl[k]), int(nr[k]), int(pr[k]))
           for i, k in enumerate(inv.ravel())]
    return out[0] if single else out


# ------------------------------------------------------------ multiplicative

def _run_search(handle: StreamHandle, eps: float, levels: int,
                search: Optional[GuessSearch]) -> ClsSplitEvaluation:
    _check(handle)
    _check_eps(eps)
    meta = handle.meta
    if search is None:
        axis = grid_axis(meta.m, eps, 1.0)
        search = GuessSearch(axis, axis, meta.N)
    while search.any_active():
        probes = search.midpoints() if levels == 1 else search.probe_tree(levels)
        nl, pl, nr, pr = _label_counts_for(handle, probes)
        el, er = np.minimum(nl, pl), np.minimum(nr, pr)

        def payload(i, probes=probes, nl=nl, pl=pl, nr=nr, pr=pr):
            return LabelRangeCounts(int(probes[i]), int(nl[i]), int(pl[i]), int(nr[i]), int(pr[i]))

        search.descend(levels, probes, el.astype(np.float64), er.astype(np.float64), payload)
        handle.account(search.words + 5 * len(probes))
    _, _, counts = search.best()
    return _evaluation(counts, meta.m)


def multiplicative_cls_split(handle: StreamHandle, eps: float,
                             search: Optional[GuessSearch] = None) -> ClsSplitEvaluation:
    """Split with misclassification rate at most ``(1 + eps) opt``; one pass per search step."""
    return _run_search(handle, eps, 1, search)


def multiplicative_cls_split_lowpass(handle: StreamHandle, eps: float, beta: float,
                                     search: Optional[GuessSearch] = None) -> ClsSplitEvaluation:
    """As :func:`multiplicative_cls_split`, resolving a probe tree per pass."""
    return _run_search(handle, eps, lowpass_depth(beta, handle.meta.N), search)


# --------------------------------------------------------------- categorical

def sampled_category_counts(sample: SampleSet, N: int):
    pos = sample.y > 0
    neg_c = np.bincount(sample.x[~pos] - 1, minlength=N).astype(np.int64)
    pos_c = np.bincount(sample.x[pos] - 1, minlength=N).astype(np.int64)
    return neg_c, pos_c


def categorical_additive(handle: StreamHandle, eps: float, seed: int = 0,
                         C: float = DEFAULT_C) -> CategoricalPartition:
    """Partition of the categories within ``eps`` of optimal (with high probability), one pass."""
    _check(handle, Mode.CATEGORICAL)
    _check_eps(eps)
    meta = handle.meta
    if meta.N > CATEGORICAL_GUARD:
        raise GuardViolation(f"categorical search refused: N={meta.N} exceeds guard {CATEGORICAL_GUARD}")
    sample = sample_pass(handle, C * meta.N / (eps * meta.m), seed)
    neg_c, pos_c = sampled_category_counts(sample, meta.N)
    if int(neg_c.sum() + pos_c.sum()) != len(sample):
        raise AssertionError("per-category counts do not cover the sample")
    handle.account(sample.words + 2 * meta.N)
    A, B, value = best_partition(neg_c, pos_c, scale=1.0 / sample.p)
    return CategoricalPartition(A, B, value / meta.m, exact=sample.p >= 1.0)

