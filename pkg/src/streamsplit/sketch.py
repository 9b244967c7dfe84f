"""Range-count estimation: Bernoulli sampling and a dyadic count-min sketch.

Sampling decisions come from a counter-based generator keyed by ``(seed, stream
index)``. Element ``i`` is kept iff ``u(seed, i) < p``, which is an independent
Bernoulli(p) draw per element and, unlike a sequential RNG, gives the same
decision no matter which machine or chunk sees the element. The MPC simulator
relies on that to reproduce the streaming samples exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import InputError
from .stream import Chunk, StreamHandle

DEFAULT_C = 64.0

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, index) -> np.ndarray:
    """Deterministic uniforms in [0, 1) for the given stream indices."""
    key = _splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
    z = _splitmix64(np.asarray(index, dtype=np.uint64) ^ key)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def log_n(N: int) -> float:
    """Natural log of the domain size, floored at log 2 so tiny domains still sample."""
    return math.log(max(N, 2))


def sampling_rate(C: float, N: int, denominator: float) -> float:
    """``C log N / denominator``, unclamped (callers clamp through :func:`sample_pass`)."""
    if denominator <= 0:
        return math.inf
    return C * log_n(N) / denominator


@dataclass
class SampleSet:
    """Sampled observations, sorted by x once the pass ends."""

    p: float
    requested_p: float
    seed: int
    x: np.ndarray
    y: np.ndarray
    index: np.ndarray
    m_seen: int = 0
    _by_label: Dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def clamped(self) -> bool:
        return self.requested_p > self.p

    def __len__(self) -> int:
        return len(self.x)

    @property
    def words(self) -> int:
        return 2 * len(self.x)

    def _sorted_x(self, label: Optional[int]) -> np.ndarray:
        if label is None:
            return self.x
        if label not in self._by_label:
            self._by_label[label] = self.x[self.y == label]
        return self._by_label[label]

    def count(self, a: int, b: int, label: Optional[int] = None) -> int:
        xs = self._sorted_x(label)
        return int(np.searchsorted(xs, b, side="right") - np.searchsorted(xs, a, side="left"))

    def range_count(self, a: int, b: int, label: Optional[int] = None) -> float:
        """Estimated number of stream elements in ``[a, b]`` (optionally with a given label)."""
        if b < a:
            return 0.0
        return self.count(a, b, label) / self.p


def clamp_probability(p: float) -> float:
    if not p > 0:
        raise InputError(f"sampling probability must be positive, got {p}")
    return min(1.0, p)


def sample_chunk(chunk: Chunk, p: float, seed: int) -> np.ndarray:
    """Boolean keep-mask for one chunk."""
    if p >= 1.0:
        return np.ones(len(chunk), dtype=bool)
    idx = np.arange(chunk.offset, chunk.offset + len(chunk), dtype=np.uint64)
    return uniforms(seed, idx) < p


def sample_pass(handle: StreamHandle, p: float, seed: int, label_aware: bool = True) -> SampleSet:
    """One pass keeping each element independently with probability ``min(p, 1)``."""
    if handle.dataset.has_deletions:
        raise InputError("sampling cannot handle deletions; use the dyadic count-min mode")
    requested = p
    p = clamp_probability(p)
    xs, ys, idx = [], [], []
    m_seen = 0
    kept = 0
    for chunk in handle.next_pass():
        keep = sample_chunk(chunk, p, seed)
        m_seen += len(chunk)
        xs.append(chunk.x[keep])
        idx.append(np.flatnonzero(keep) + chunk.offset)
        if label_aware:
            ys.append(chunk.y[keep])
        kept += int(keep.sum())
        handle.account((2 if label_aware else 1) * kept)
    x = np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)
    y = np.concatenate(ys) if ys else np.zeros(0, dtype=handle.dataset.y.dtype)
    index = np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64)
    return make_sample_set(x, y, index, p, requested, seed, m_seen, label_aware)


def make_sample_set(x, y, index, p, requested, seed, m_seen=0, label_aware=True) -> SampleSet:
    order = np.lexsort((index, x))
    x = np.asarray(x)[order]
    y = np.asarray(y)[order] if label_aware and len(y) == len(order) else np.zeros(0)
    return SampleSet(p, requested, seed, x, y, np.asarray(index)[order], m_seen)


@dataclass(frozen=True)
class RangeEstimate:
    range: Tuple[int, int]
    label: Optional[int]
    k: int
    estimate: float


def estimate_range(sample: SampleSet, a: int, b: int, label: Optional[int] = None,
                   N: Optional[int] = None) -> RangeEstimate:
    if a < 1 or b < a or (N is not None and b > N):
        raise InputError(f"invalid range [{a}, {b}]")
    k = sample.count(a, b, label)
    return RangeEstimate((a, b), label, k, k / sample.p)


# ------------------------------------------------------------ calibration

@dataclass(frozen=True)
class ThresholdReport:
    m: int
    alpha: float
    C: float
    N: int
    p: float
    clamped: bool
    trials: int
    clause1_failures: int
    clause2_failures: int
    failed_trials: int

    @property
    def failure_rate(self) -> float:
        return self.failed_trials / self.trials

    @property
    def budget(self) -> float:
        return 1.0 / self.N


def threshold_layout(m: int, alpha: float, N: int) -> np.ndarray:
    """Per-value counts putting ranges right at both separation thresholds.

    Value 1 and value ``N // 2`` hold ``ceil(4 m^alpha)`` elements each (the
    smallest count the upper clause covers), value 2 holds ``floor(m^alpha / 8)``
    (the largest the lower clause covers) and the rest sits at ``N``.
    """
    if N < 4:
        raise InputError("threshold layout needs N >= 4")
    t = m ** alpha
    big, small = math.ceil(4 * t), math.floor(t / 8)
    counts = np.zeros(N + 1, dtype=np.int64)
    counts[1] = big
    counts[2] = small
    counts[N // 2] += big
    rest = m - counts.sum()
    if rest < 0:
        raise InputError("m too small for the threshold layout")
    counts[N] += rest
    return counts


def verify_threshold_separation(m: int, alpha: float, trials: int, seed: int,
                                C: float = DEFAULT_C, N: int = 64) -> ThresholdReport:
    """Monte-Carlo check of the two sampling threshold clauses over every range ``[a, b]``.

    Clause 1: ``f >= 4 m^alpha`` must give ``k/p >= 2 m^alpha``.
    Clause 2: ``f <= m^alpha / 8`` must give ``k/p <= m^alpha``.
    A trial fails if any range violates either clause.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    t = m ** alpha
    requested = sampling_rate(C, N, t)
    p = min(1.0, requested)
    counts = threshold_layout(m, alpha, N)
    x = np.repeat(np.arange(N + 1), counts)
    f_prefix = np.concatenate([[0], np.cumsum(counts[1:])])
    a, b = np.triu_indices(N)
    f = f_prefix[b + 1] - f_prefix[a]
    c1 = c2 = failed = 0
    rng = np.random.default_rng(seed)
    for trial_seed in rng.integers(0, 2 ** 63, size=trials).tolist():
        keep = uniforms(trial_seed, np.arange(m, dtype=np.uint64)) < p
        k_per = np.bincount(x[keep], minlength=N + 1)
        k_prefix = np.concatenate([[0], np.cumsum(k_per[1:])])
        est = (k_prefix[b + 1] - k_prefix[a]) / p
        bad1 = int(np.sum((f >= 4 * t) & (est < 2 * t)))
        bad2 = int(np.sum((f <= t / 8) & (est > t)))
        c1 += bad1
        c2 += bad2
        failed += int(bad1 + bad2 > 0)
    return ThresholdReport(m, alpha, C, N, p, requested > 1, trials, c1, c2, failed)


def deviation_rate(dataset, p: float, a: int, b: int, threshold: float, seeds,
                   label: Optional[int] = None) -> float:
    """Fraction of seeds for which ``|k/p - f_[a,b]| >= threshold``."""
    ds = dataset.net()
    inside = (ds.x >= a) & (ds.x <= b)
    if label is not None:
        inside &= ds.y == label
    f = int(inside.sum())
    idx = np.arange(len(ds), dtype=np.uint64)
    seeds = list(seeds)
    bad = 0
    for s in seeds:
        k = int(np.sum(inside & (uniforms(s, idx) < p)))
        bad += abs(k / p - f) >= threshold
    return bad / len(seeds)


# -------------------------------------------------------- dyadic count-min

_PRIME = (1 << 31) - 1


class DyadicCountMin:
    """Count-min sketches over the dyadic levels of ``[1, N]``; supports deletions.

    Level ``l`` counts elements per aligned block of ``2**l`` values. A range query
    sums at most two blocks per level. Levels with no more blocks than the sketch
    width are kept as exact counters. Estimates never undercount as long as every
    net count stays non-negative.
    """

    def __init__(self, N: int, eps_prime: float = 0.01, delta: Optional[float] = None,
                 seed: int = 0, width: Optional[int] = None, depth: Optional[int] = None):
        if N < 1:
            raise InputError("N must be >= 1")
        if not eps_prime > 0:
            raise InputError("eps_prime must be positive")
        self.N = N
        self.eps_prime = eps_prime
        self.delta = delta if delta is not None else 1.0 / max(N, 2) ** 2
        self.depth = depth or max(1, math.ceil(math.log(1.0 / self.delta)))
        self.width = width or max(1, math.ceil(math.e * log_n(N) / eps_prime))
        self.levels = max(1, math.ceil(math.log2(N)) + 1) if N > 1 else 1
        rng = np.random.default_rng(seed)
        self._tables = []
        self._hash = []
        for level in range(self.levels):
            blocks = ((N - 1) >> level) + 1
            if blocks <= self.width:
                self._tables.append(np.zeros(blocks, dtype=np.int64))
                self._hash.append(None)
            else:
                self._tables.append(np.zeros((self.depth, self.width), dtype=np.int64))
                a = rng.integers(1, _PRIME, size=self.depth, dtype=np.int64)
                b = rng.integers(0, _PRIME, size=self.depth, dtype=np.int64)
                self._hash.append((a, b))
        self.total = 0
        self.underflows = 0

    @property
    def words(self) -> int:
        return sum(t.size for t in self._tables)

    def _buckets(self, level: int, blocks: np.ndarray) -> np.ndarray:
        a, b = self._hash[level]
        return ((a[:, None] * blocks[None, :] + b[:, None]) % _PRIME) % self.width

    def update_many(self, xs, deltas) -> None:
        xs = np.asarray(xs, dtype=np.int64)
        deltas = np.broadcast_to(np.asarray(deltas, dtype=np.int64), xs.shape)
        if len(xs) == 0:
            return
        if np.any((xs < 1) | (xs > self.N)):
            raise InputError(f"value out of domain [1, {self.N}]")
        zero_based = xs - 1
        for level in range(self.levels):
            blocks = zero_based >> level
            table = self._tables[level]
            if self._hash[level] is None:
                np.add.at(table, blocks, deltas)
            else:
                cols = self._buckets(level, blocks)
                for r in range(self.depth):
                    np.add.at(table[r], cols[r], deltas)
        self.total += int(deltas.sum())
        if np.any(deltas < 0):
            touched = np.unique(xs[deltas < 0])
            self.underflows += int(np.sum(self._point_estimates(0, touched - 1) < 0))

    def update(self, x: int, delta: int = 1) -> None:
        if delta not in (1, -1):
            raise InputError("delta must be +1 or -1")
        self.update_many([x], [delta])

    def _point_estimates(self, level: int, blocks: np.ndarray) -> np.ndarray:
        table = self._tables[level]
        if self._hash[level] is None:
            return table[blocks]
        cols = self._buckets(level, blocks)
        return np.min(table[np.arange(self.depth)[:, None], cols], axis=0)

    def range_count(self, a: int, b: int) -> float:
        """Estimated count of elements with value in ``[a, b]``."""
        if b < a:
            return 0.0
        if a < 1 or b > self.N:
            raise InputError(f"invalid range [{a}, {b}]")
        lo, hi = a - 1, b  # half-open, zero based
        total = 0
        level = 0
        while lo < hi:
            picks = []
            if lo & 1:
                picks.append(lo)
                lo += 1
            if hi & 1:
                hi -= 1
                picks.append(hi)
            if picks:
                if level >= self.levels:  # cannot happen for in-domain ranges
                    raise AssertionError("dyadic decomposition ran past the top level")
                total += int(self._point_estimates(level, np.array(picks, dtype=np.int64)).sum())
            lo >>= 1
            hi >>= 1
            level += 1
        return float(total)

    def error_budget(self) -> float:
        """Per-query overestimate bound ``eps' * total * log N``."""
        return self.eps_prime * max(self.total, 0) * max(1.0, math.log2(max(self.N, 2)))


def dyadic_update(sketch: DyadicCountMin, x: int, delta: int) -> None:
    sketch.update(x, delta)


def dyadic_range(sketch: DyadicCountMin, a: int, b: int) -> float:
    return sketch.range_count(a, b)


def sketch_pass(handle: StreamHandle, eps_prime: float, seed: int,
                labels: Tuple[Optional[int], ...] = (None,)) -> Dict[Optional[int], DyadicCountMin]:
    """One pass building a dyadic count-min per requested label (``None`` = all elements)."""
    N = handle.meta.N
    sketches = {lab: DyadicCountMin(N, eps_prime, seed=seed + i) for i, lab in enumerate(labels)}
    handle.account(sum(s.words for s in sketches.values()))
    for chunk in handle.next_pass():
        w = np.ones(len(chunk), dtype=np.int64) if chunk.w is None else chunk.w.astype(np.int64)
        for lab, sk in sketches.items():
            sel = slice(None) if lab is None else chunk.y == lab
            sk.update_many(chunk.x[sel], w[sel])
    return sketches
