"""Exact offline split solvers and checkers for two structural properties of the loss.

Everything here evaluates losses directly from the raw observations (means first,
then squared deviations), never through the prefix-sum identities the streaming
algorithms rely on, so it can serve as their ground truth.

Conventions shared with the streaming code:

* an empty side of a split has mean 0 and contributes 0 error;
* among equal minimisers the smallest split wins (lexicographically smallest ``A``
  for categorical partitions);
* regression candidates are the distinct observed values (the loss is constant on
  the gaps between them).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import GuardViolation, InputError
from .stream import Dataset, Mode

CATEGORICAL_GUARD = 24
# relative slack used when picking the smallest index among floating-point ties
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SplitEvaluation:
    j: int
    mu: float
    gamma: float
    err_left: float
    err_right: float
    loss: float
    exact: bool = True


@dataclass(frozen=True)
class LabelRangeCounts:
    """Label counts on both sides of split ``j``: f(-1,[1,j]), f(+1,[1,j]), f(-1,(j,N]), f(+1,(j,N])."""

    j: int
    neg_left: int
    pos_left: int
    neg_right: int
    pos_right: int

    @property
    def total(self) -> int:
        return self.neg_left + self.pos_left + self.neg_right + self.pos_right

    @property
    def misclassified(self) -> int:
        return min(self.neg_left, self.pos_left) + min(self.neg_right, self.pos_right)

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.neg_left, self.pos_left, self.neg_right, self.pos_right)


def _majority(neg: float, pos: float) -> int:
    return 1 if pos >= neg else -1


@dataclass(frozen=True)
class ClsSplitEvaluation:
    j: int
    left_label: int
    right_label: int
    loss: float
    exact: bool = True
    counts: Optional[LabelRangeCounts] = None


@dataclass(frozen=True)
class CategoricalPartition:
    A: frozenset
    B: frozenset
    loss: float
    exact: bool = True


@dataclass
class OptResult:
    best: Union[SplitEvaluation, ClsSplitEvaluation, CategoricalPartition]
    opt: float
    full_curve: Optional[List[Tuple[int, float]]] = field(default=None, repr=False)


def first_min(values: Sequence[float], rtol: float = TIE_RTOL) -> int:
    """Index of the first value within ``rtol`` (relative, floor 1) of the minimum."""
    arr = np.asarray(values, dtype=np.float64)
    lo = arr.min()
    return int(np.flatnonzero(arr <= lo + rtol * max(1.0, abs(lo)))[0])


def _require(dataset: Dataset, mode: Mode) -> Dataset:
    if dataset.mode is not mode:
        raise InputError(f"expected a {mode.value} dataset, got {dataset.mode.value}")
    dataset = dataset.net()
    if dataset.m < 1:
        raise InputError("empty dataset")
    return dataset


# ------------------------------------------------------------------ regression

def subset_stats(values: Iterable[float]) -> Tuple[float, float]:
    """Mean and sum of squared deviations of a multiset (``(0, 0)`` when empty)."""
    vals = [float(v) for v in values]
    if not vals:
        return 0.0, 0.0
    mean = math.fsum(vals) / len(vals)
    return mean, math.fsum((v - mean) ** 2 for v in vals)


def _side(values: np.ndarray) -> Tuple[float, float]:
    if len(values) == 0:
        return 0.0, 0.0
    mean = float(values.mean())
    return mean, float(np.sum((values - mean) ** 2))


def regression_loss_at(dataset: Dataset, j: int) -> SplitEvaluation:
    """L(j) evaluated directly from the observations."""
    ds = _require(dataset, Mode.REGRESSION)
    left = ds.x <= j
    mu, el = _side(ds.y[left])
    gamma, er = _side(ds.y[~left])
    return SplitEvaluation(int(j), mu, gamma, el, er, (el + er) / ds.m)


def oracle_regression(dataset: Dataset, all_splits: bool = False, curve: bool = False) -> OptResult:
    """Exact regression split by brute force over candidate splits.

    Candidates are the distinct observed values, or every ``j`` in ``[1, N]`` when
    ``all_splits`` is set.
    """
    ds = _require(dataset, Mode.REGRESSION)
    order = np.argsort(ds.x, kind="stable")
    xs, ys = ds.x[order], ds.y[order]
    cands = np.arange(1, ds.N + 1) if all_splits else np.unique(xs)
    cuts = np.searchsorted(xs, cands, side="right")
    evals = []
    for j, c in zip(cands.tolist(), cuts.tolist()):
        mu, el = _side(ys[:c])
        gamma, er = _side(ys[c:])
        evals.append(SplitEvaluation(j, mu, gamma, el, er, (el + er) / ds.m))
    losses = [e.loss for e in evals]
    best = evals[first_min(losses)]
    full = [(e.j, e.loss) for e in evals] if curve else None
    return OptResult(best, best.loss, full)


# -------------------------------------------------------------- classification

def label_counts_at(dataset: Dataset, j: int) -> LabelRangeCounts:
    ds = dataset.net()
    left = ds.x <= j
    pos = ds.y > 0
    return LabelRangeCounts(int(j), int(np.sum(left & ~pos)), int(np.sum(left & pos)),
                            int(np.sum(~left & ~pos)), int(np.sum(~left & pos)))


def _cls_eval(c: LabelRangeCounts, m: int) -> ClsSplitEvaluation:
    return ClsSplitEvaluation(c.j, _majority(c.neg_left, c.pos_left),
                              _majority(c.neg_right, c.pos_right), c.misclassified / m, True, c)


def classification_loss_at(dataset: Dataset, j: int) -> ClsSplitEvaluation:
    ds = _require(dataset, dataset.mode if dataset.mode.labelled else Mode.CLASSIFICATION)
    return _cls_eval(label_counts_at(ds, j), ds.m)


def oracle_classification(dataset: Dataset, all_splits: bool = False, curve: bool = False) -> OptResult:
    """Exact misclassification-rate split by counting labels on each side of every candidate."""
    ds = _require(dataset, Mode.CLASSIFICATION)
    cands = np.arange(1, ds.N + 1) if all_splits else np.unique(ds.x)
    order = np.argsort(ds.x, kind="stable")
    xs, pos = ds.x[order], (ds.y[order] > 0).astype(np.int64)
    cut = np.searchsorted(xs, cands, side="right")
    pos_before = np.concatenate([[0], np.cumsum(pos)])[cut]
    n_pos = int(pos.sum())
    evals = []
    for j, c, pl in zip(cands.tolist(), cut.tolist(), pos_before.tolist()):
        counts = LabelRangeCounts(j, c - pl, pl, (ds.m - c) - (n_pos - pl), n_pos - pl)
        evals.append(_cls_eval(counts, ds.m))
    errors = [e.counts.misclassified for e in evals]
    best = evals[int(np.argmin(errors))]
    full = [(e.j, e.loss) for e in evals] if curve else None
    return OptResult(best, best.loss, full)


# ----------------------------------------------------------------- categorical

def category_label_counts(dataset: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Per-category counts of label -1 and +1, indexed 0..N-1 for categories 1..N."""
    ds = dataset.net()
    neg = np.bincount(ds.x[ds.y < 0] - 1, minlength=ds.N)
    pos = np.bincount(ds.x[ds.y > 0] - 1, minlength=ds.N)
    return neg, pos


def categorical_loss(dataset: Dataset, A: Iterable[int]) -> float:
    ds = _require(dataset, Mode.CATEGORICAL)
    in_a = np.isin(ds.x, np.fromiter(A, dtype=np.int64))
    pos = ds.y > 0
    fa = min(np.sum(in_a & pos), np.sum(in_a & ~pos))
    fb = min(np.sum(~in_a & pos), np.sum(~in_a & ~pos))
    return float(fa + fb) / ds.m


def subset_sums(values: np.ndarray) -> np.ndarray:
    """Sums over every subset of ``values``; bit ``i`` of the index selects ``values[i]``."""
    sums = np.zeros(1, dtype=np.result_type(values.dtype, np.int64))
    for v in values:
        sums = np.concatenate([sums, sums + v])
    return sums


def lexicographic_first(masks: np.ndarray, n_bits: int) -> int:
    """Among bit masks (bit i = category i+1), the one whose sorted category tuple is smallest."""
    masks = np.asarray(masks, dtype=np.int64)
    prefix = 0
    last = -1
    while True:
        exact = masks[masks == prefix]
        if len(exact):
            return int(prefix)
        above = masks >> (last + 1)
        # lowest member strictly above the current prefix
        low = np.full(len(masks), n_bits, dtype=np.int64)
        for b in range(n_bits - last - 1):
            hit = ((above >> b) & 1).astype(bool) & (low == n_bits)
            low[hit] = last + 1 + b
        nxt = int(low.min())
        masks = masks[low == nxt]
        prefix |= 1 << nxt
        last = nxt


def best_partition(neg: np.ndarray, pos: np.ndarray, scale: float = 1.0, m: Optional[int] = None):
    """Minimise min(neg_A, pos_A) + min(neg_B, pos_B) over partitions with category 1 pinned to A.

    Returns ``(A, B, minimised value)``. ``scale`` multiplies the counts (sampling
    estimates pass ``1/p``).
    """
    N = len(neg)
    neg_rest = subset_sums(neg[1:]) if N > 1 else np.zeros(1, dtype=np.int64)
    pos_rest = subset_sums(pos[1:]) if N > 1 else np.zeros(1, dtype=np.int64)
    neg_a = neg_rest + neg[0]
    pos_a = pos_rest + pos[0]
    neg_b = neg.sum() - neg_a
    pos_b = pos.sum() - pos_a
    value = np.minimum(neg_a, pos_a) + np.minimum(neg_b, pos_b)
    ties = np.flatnonzero(value == value.min())
    masks = (ties << 1) | 1
    mask = lexicographic_first(masks, N)
    A = frozenset(i + 1 for i in range(N) if mask >> i & 1)
    B = frozenset(range(1, N + 1)) - A
    return A, B, float(value.min()) * scale


def oracle_categorical(dataset: Dataset) -> OptResult:
    """Exact categorical partition by enumerating all 2^(N-1) partitions."""
    ds = _require(dataset, Mode.CATEGORICAL)
    if ds.N > CATEGORICAL_GUARD:
        raise GuardViolation(f"categorical enumeration refused: N={ds.N} exceeds guard {CATEGORICAL_GUARD}")
    neg, pos = category_label_counts(ds)
    A, B, value = best_partition(neg, pos)
    loss = value / ds.m
    return OptResult(CategoricalPartition(A, B, loss), loss)


def oracle(dataset: Dataset) -> OptResult:
    return {Mode.REGRESSION: oracle_regression,
            Mode.CLASSIFICATION: oracle_classification,
            Mode.CATEGORICAL: oracle_categorical}[dataset.mode](dataset)


# ------------------------------------------------------- property checkers

def check_monotonicity(S: Sequence[float], S_sub: Sequence[float]) -> bool:
    """Sum of squared deviations never grows when passing to a sub-multiset."""
    if Counter(S_sub) - Counter(S):
        raise InputError("second argument is not a sub-multiset of the first")
    _, g = subset_stats(S)
    _, g_sub = subset_stats(S_sub)
    # fsum results are exact up to one rounding each; allow that much
    return g_sub <= g + 4 * np.finfo(float).eps * max(1.0, g) * max(1, len(S))


def split_shift_bound(dataset: Dataset, j: int, j2: int) -> Tuple[float, float, float]:
    """``(L(j2), L(j) + 5 b M^2 / (4m), b)`` for ``j < j2``."""
    if j >= j2:
        raise InputError(f"split shift needs j < j', got {j} >= {j2}")
    ds = _require(dataset, Mode.REGRESSION)
    b = int(np.sum((ds.x > j) & (ds.x <= j2)))
    lhs = regression_loss_at(ds, j2).loss
    rhs = regression_loss_at(ds, j).loss + 5 * b * ds.M ** 2 / (4 * ds.m)
    return lhs, rhs, b


def check_split_shift(dataset: Dataset, j: int, j2: int) -> bool:
    """Moving a split right across ``b`` points costs at most ``5 b M^2 / (4m)``."""
    lhs, rhs, _ = split_shift_bound(dataset, j, j2)
    return lhs <= rhs + 1e-12 * max(1.0, rhs)
