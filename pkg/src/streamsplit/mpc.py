"""Round-based simulator of the massively parallel computation model.

Machines are isolated shards. Within a round every machine computes on its local
state and queues messages; the messages become visible only when the round closes
(double buffering), and every word is written to the :class:`RoundLedger`. Machine
0 is the central machine. A budget violation aborts the run with the ledger attached.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .classification import _evaluation as _cls_evaluation
from .classification import estimated_loss_curve
from .errors import BudgetViolation, InputError
from .oracle import ClsSplitEvaluation, LabelRangeCounts, SplitEvaluation, first_min
from .regression import (ERROR_RTOL, RESOLUTION, BucketAggregates, build_candidates, evaluate_buckets,
                         side_errors)
from .search import GuessSearch, grid_axis, lowpass_depth
from .sketch import DEFAULT_C, make_sample_set, sampling_rate, uniforms
from .stream import Dataset, DatasetMeta, Mode

CENTRAL = 0
# words per aggregate message: bucket id plus up to three sums
AGGREGATE_WORDS = 4


@dataclass
class MachineShard:
    q: int
    x: np.ndarray
    y: np.ndarray
    index: np.ndarray  # global stream position, used for sampling decisions
    budget: Optional[int] = None

    def __len__(self) -> int:
        return len(self.x)

    @property
    def words(self) -> int:
        return 2 * len(self.x)


@dataclass
class RoundStats:
    round: int
    label: str
    sent: List[int]
    received: List[int]
    max_message: int = 0

    def to_dict(self) -> dict:
        return {"round": self.round, "label": self.label, "sent": self.sent,
                "received": self.received, "max_message": self.max_message}


@dataclass
class RoundLedger:
    machines: int
    rounds: List[RoundStats] = field(default_factory=list)

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    @property
    def total_words(self) -> int:
        return sum(sum(r.sent) for r in self.rounds)

    def to_dict(self) -> dict:
        return {"machines": self.machines, "rounds": [r.to_dict() for r in self.rounds]}

    def dump(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


@dataclass
class BoundaryAudit:
    """Which machines report on which bucket, for one aggregation round."""

    pairs: List[Tuple[int, int]]  # (bucket, machine)
    boundary: Dict[Tuple[int, int], bool]
    buckets: int
    machines: int

    def boundary_counts(self) -> Dict[int, int]:
        out: Dict[int, int] = {}
        for (t, q), b in self.boundary.items():
            if b:
                out[q] = out.get(q, 0) + 1
        return out

    @property
    def ok(self) -> bool:
        if any(c > 2 for c in self.boundary_counts().values()):
            return False
        owners: Dict[int, int] = {}
        for t, q in self.pairs:
            owners[t] = owners.get(t, 0) + 1
        if any(owners[t] != 1 for (t, q), b in self.boundary.items() if not b):
            return False
        return len(self.pairs) <= self.buckets + 2 * self.machines


class Cluster:
    """Shards plus the message ledger. Machines know the public parameters ``meta``."""

    def __init__(self, shards: List[MachineShard], meta: DatasetMeta, budget: Optional[int] = None):
        self.shards = shards
        self.meta = meta
        self.budget = budget
        self.ledger = RoundLedger(len(shards))
        self.audits: List[BoundaryAudit] = []
        self._outbox: List[Tuple[int, int, object, int]] = []
        self._inbox: Dict[int, List[Tuple[int, object]]] = {}
        self._check_storage()

    def __len__(self) -> int:
        return len(self.shards)

    def __iter__(self):
        return iter(self.shards)

    def __getitem__(self, q: int) -> MachineShard:
        return self.shards[q]

    @property
    def rounds(self) -> int:
        return self.ledger.num_rounds

    def _violation(self, message: str) -> None:
        raise BudgetViolation(message, ledger=self.ledger.to_dict())

    def _check_storage(self) -> None:
        if self.budget is None:
            return
        for s in self.shards:
            if s.words > self.budget:
                self._violation(f"machine {s.q} stores {s.words} words, budget {self.budget}")

    def send(self, src: int, dst: int, payload, words: int) -> None:
        self._outbox.append((src, dst, payload, int(words)))

    def inbox(self, q: int) -> List[Tuple[int, object]]:
        return self._inbox.get(q, [])

    def close_round(self, label: str) -> None:
        """Deliver every queued message and ledger the round."""
        n = len(self.shards)
        sent, received = [0] * n, [0] * n
        biggest = 0
        inbox: Dict[int, List[Tuple[int, object]]] = {}
        for src, dst, payload, words in self._outbox:
            sent[src] += words
            received[dst] += words
            biggest = max(biggest, words)
            inbox.setdefault(dst, []).append((src, payload))
        self._outbox = []
        self._inbox = inbox
        self.ledger.rounds.append(RoundStats(self.ledger.num_rounds + 1, label, sent, received, biggest))
        if self.budget is not None:
            for q in range(n):
                if received[q] > self.budget:
                    self._violation(f"round {self.ledger.num_rounds} ({label}): machine {q} "
                                    f"received {received[q]} words, budget {self.budget}")
            self._check_storage()

    def broadcast(self, payload, words: int) -> None:
        for q in range(1, len(self.shards)):
            self.send(CENTRAL, q, payload, words)

    def trace(self) -> dict:
        out = self.ledger.to_dict()
        out["budget_words"] = self.budget
        out["audits"] = [{"buckets": a.buckets, "pairs": len(a.pairs),
                          "max_boundary": max(a.boundary_counts().values(), default=0), "ok": a.ok}
                         for a in self.audits]
        return out


# ------------------------------------------------------------- primitives

def distribute(dataset: Dataset, num_machines: int, budget: Optional[int] = None) -> Cluster:
    """Round-robin assignment of the stream to machines (no round charged)."""
    if num_machines < 1:
        raise InputError("need at least one machine")
    ds = dataset.net()
    idx = np.arange(len(ds.x), dtype=np.int64)
    shards = [MachineShard(q, ds.x[q::num_machines], ds.y[q::num_machines], idx[q::num_machines], budget)
              for q in range(num_machines)]
    return Cluster(shards, ds.meta, budget)


def mpc_sort(cluster: Cluster) -> Cluster:
    """Globally sort by x into balanced contiguous blocks; charged as one round."""
    shards = cluster.shards
    n = len(shards)
    owner = np.concatenate([np.full(len(s), s.q) for s in shards])
    x = np.concatenate([s.x for s in shards])
    y = np.concatenate([s.y for s in shards])
    idx = np.concatenate([s.index for s in shards])
    order = np.lexsort((idx, x))
    bounds = np.linspace(0, len(x), n + 1).round().astype(np.int64)
    new = []
    for q in range(n):
        sel = order[bounds[q]:bounds[q + 1]]
        for src in np.unique(owner[sel]).tolist():
            if src != q:
                cluster.send(src, q, None, 2 * int(np.sum(owner[sel] == src)))
        new.append(MachineShard(q, x[sel], y[sel], idx[sel], cluster.budget))
    cluster.shards = new
    cluster.close_round("sort")
    return cluster


def _local_sums(shard: MachineShard, splits: np.ndarray, regression: bool):
    t = np.searchsorted(splits, shard.x, side="left")
    present = np.unique(t)
    nb = len(splits)
    if regression:
        y = shard.y.astype(np.float64)
        sums = (np.bincount(t, None, nb), np.bincount(t, y, nb), np.bincount(t, y * y, nb))
    else:
        pos = shard.y > 0
        sums = (np.bincount(t[~pos], None, nb), np.bincount(t[pos], None, nb))
    return present, [s[present] for s in sums]


def mpc_bucket_aggregates(cluster: Cluster, splits, regression: bool = True,
                          label: str = "aggregate") -> Tuple[np.ndarray, List[np.ndarray]]:
    """Per-bucket sums at the central machine in one round.

    Buckets are ``(s_{t-1}, s_t]`` over the sorted ``splits`` (``N`` appended if
    missing, ``s_{-1} = 0``). Each machine reports one message per bucket it holds
    data for; with sorted shards only its first and last bucket can be shared.
    Returns the padded splits and the summed arrays (count, sum, square sum for
    regression; negative and positive counts otherwise).
    """
    N = cluster.meta.N
    splits = np.unique(np.asarray(splits, dtype=np.int64))
    if len(splits) == 0 or splits[-1] != N:
        splits = np.append(splits, N)
    if cluster.budget is not None and len(splits) > cluster.budget:
        cluster._violation(f"{len(splits)} splits exceed the per-machine budget {cluster.budget}")
    nb = len(splits)
    holders: Dict[int, List[int]] = {}
    for shard in cluster.shards:
        present, sums = _local_sums(shard, splits, regression)
        for i, t in enumerate(present.tolist()):
            cluster.send(shard.q, CENTRAL, (t, [float(s[i]) for s in sums]), AGGREGATE_WORDS)
            holders.setdefault(t, []).append(shard.q)
    cluster.close_round(label)

    pairs = [(t, q) for t, qs in holders.items() for q in qs]
    boundary = {(t, q): len(holders[t]) > 1 for t, q in pairs}
    cluster.audits.append(BoundaryAudit(pairs, boundary, nb, len(cluster.shards)))
    width = 3 if regression else 2
    totals = [np.zeros(nb) for _ in range(width)]
    for _, (t, vals) in cluster.inbox(CENTRAL):
        for k in range(width):
            totals[k][t] += vals[k]
    return splits, totals


def _sample_shards(cluster: Cluster, p: float, seed: int, with_labels: bool) -> None:
    for shard in cluster.shards:
        keep = uniforms(seed, shard.index) < p if p < 1 else np.ones(len(shard), dtype=bool)
        payload = (shard.x[keep], shard.y[keep], shard.index[keep])
        cluster.send(shard.q, CENTRAL, payload, (2 if with_labels else 1) * int(keep.sum()))


def _collect_samples(cluster: Cluster):
    parts = [payload for _, payload in cluster.inbox(CENTRAL)]
    if not parts:
        return np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64)
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


# ------------------------------------------------------------ regression

def _require(cluster: Cluster, mode: Mode) -> None:
    if cluster.meta.mode is not mode:
        raise InputError(f"expected a {mode.value} dataset, got {cluster.meta.mode.value}")
    if cluster.meta.m < 1:
        raise InputError("empty dataset")


def mpc_regression_additive(cluster: Cluster, seed: int = 0, C: float = DEFAULT_C) -> SplitEvaluation:
    """Additive ``O(1/sqrt m)`` regression split: sort, sample, broadcast candidates, aggregate."""
    _require(cluster, Mode.REGRESSION)
    m, N = cluster.meta.m, cluster.meta.N
    eps = 1.0 / math.sqrt(m)
    mpc_sort(cluster)
    requested = sampling_rate(C, N, eps * m)
    p = min(1.0, requested)
    _sample_shards(cluster, p, seed, with_labels=False)
    cluster.close_round("sample")
    x, _, idx = _collect_samples(cluster)
    sample = make_sample_set(x, np.zeros(0), idx, p, requested, seed, label_aware=False)
    cands = build_candidates(sample.range_count, eps, m, N)
    cluster.broadcast(cands.splits, len(cands.splits))
    cluster.close_round("broadcast candidates")
    splits, (A, B, Csum) = mpc_bucket_aggregates(cluster, cands.splits[1:])
    agg = BucketAggregates(np.concatenate([[0], splits]), A, B, Csum)
    evals = evaluate_buckets(agg, m)
    return evals[first_min([e.loss for e in evals])]


def _phased_search(cluster: Cluster, search: GuessSearch, levels: int, regression: bool):
    m = cluster.meta.m
    first = True
    while search.any_active():
        probes = search.probe_tree(levels)
        if not first:
            # every guess starts on [1, N], so the first tree is known to all machines
            cluster.broadcast(probes, len(probes))
            cluster.close_round("broadcast probes")
        first = False
        _, sums = mpc_bucket_aggregates(cluster, probes, regression, label="probe aggregates")
        k = len(probes)
        left = [np.cumsum(s)[:k] for s in sums]
        tot = [s.sum() for s in sums]
        right = [t - l for t, l in zip(tot, left)]
        if regression:
            mu, el = side_errors(*left)
            gamma, er = side_errors(*right)

            def payload(i, probes=probes, mu=mu, gamma=gamma, el=el, er=er):
                return SplitEvaluation(int(probes[i]), float(mu[i]), float(gamma[i]), float(el[i]),
                                       float(er[i]), float((el[i] + er[i]) / m))
        else:
            nl, pl = (np.rint(v).astype(np.int64) for v in left)
            nr, pr = (np.rint(v).astype(np.int64) for v in right)
            el, er = np.minimum(nl, pl).astype(float), np.minimum(nr, pr).astype(float)

            def payload(i, probes=probes, nl=nl, pl=pl, nr=nr, pr=pr):
                return LabelRangeCounts(int(probes[i]), int(nl[i]), int(pl[i]), int(nr[i]), int(pr[i]))
        search.descend(levels, probes, el, er, payload)
    return search.best()[2]


def mpc_regression_multiplicative(cluster: Cluster, eps: float, beta: float,
                                  resolution: float = RESOLUTION) -> SplitEvaluation:
    """``(1+eps)``-approximate regression split; two rounds per probe-tree phase."""
    _require(cluster, Mode.REGRESSION)
    if not 0 < eps < 1:
        raise InputError(f"eps must be in (0, 1), got {eps}")
    meta = cluster.meta
    scale = meta.m * meta.M * meta.M
    axis = grid_axis(scale, eps, min(1.0, resolution * meta.m))
    search = GuessSearch(axis, axis, meta.N, tol=ERROR_RTOL * scale)
    mpc_sort(cluster)
    return _phased_search(cluster, search, lowpass_depth(beta, meta.N), regression=True)


# -------------------------------------------------------- classification

def mpc_classification(cluster: Cluster, variant: str = "additive", eps: Optional[float] = None,
                       beta: float = 0.5, seed: int = 0, C: float = DEFAULT_C) -> ClsSplitEvaluation:
    """Classification split: ``additive`` samples to the central machine in one round,
    ``multiplicative`` runs the phased guess search on label counts."""
    _require(cluster, Mode.CLASSIFICATION)
    m, N = cluster.meta.m, cluster.meta.N
    if variant == "additive":
        eps = 1.0 / math.sqrt(m) if eps is None else eps
        requested = sampling_rate(C, N, eps * m)
        p = min(1.0, requested)
        _sample_shards(cluster, p, seed, with_labels=True)
        cluster.close_round("sample")
        x, y, idx = _collect_samples(cluster)
        if len(x) == 0:
            raise InputError("no element was sampled; increase C")
        sample = make_sample_set(x, y, idx, p, requested, seed)
        curve = estimated_loss_curve(sample, m)
        i = curve.best_index()
        return _cls_evaluation(curve.counts(i), p * m, exact=p >= 1.0)
    if variant == "multiplicative":
        if eps is None or not 0 < eps < 1:
            raise InputError("multiplicative variant needs eps in (0, 1)")
        axis = grid_axis(m, eps, 1.0)
        search = GuessSearch(axis, axis, N)
        mpc_sort(cluster)
        counts = _phased_search(cluster, search, lowpass_depth(beta, N), regression=False)
        return _cls_evaluation(counts, m)
    raise InputError(f"unknown variant {variant!r}")


MPC_ALGORITHMS: Dict[str, Callable] = {
    "mpc-reg-additive": lambda c, eps, beta, seed, C: mpc_regression_additive(c, seed, C),
    "mpc-reg-mult": lambda c, eps, beta, seed, C: mpc_regression_multiplicative(c, eps, beta),
    "mpc-cls-additive": lambda c, eps, beta, seed, C: mpc_classification(c, "additive", None, beta, seed, C),
    "mpc-cls-mult": lambda c, eps, beta, seed, C: mpc_classification(c, "multiplicative", eps, beta, seed, C),
}
