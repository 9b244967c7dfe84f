"""Stream data model: datasets, replayable multi-pass handles, file I/O and synthetic generators.

A stream is a finite sequence of observations ``(x, y)`` with ``x`` in ``[1, N]``.
Algorithms only see it through :class:`StreamHandle`, which hands out one pass at a
time (as ordered numpy chunks) and counts completed passes exactly. Space is
accounted in machine words: algorithms report how many items they keep and the
handle remembers the peak.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from .errors import InputError

DEFAULT_CHUNK = 4096


class Mode(str, Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"
    CATEGORICAL = "categorical"

    @classmethod
    def parse(cls, value: Union[str, "Mode"]) -> "Mode":
        if isinstance(value, Mode):
            return value
        aliases = {"reg": "regression", "cls": "classification", "cat": "categorical"}
        try:
            return cls(aliases.get(value, value))
        except ValueError:
            raise InputError(f"unknown mode {value!r}") from None

    @property
    def labelled(self) -> bool:
        """True for the two modes whose labels are in {-1, +1}."""
        return self is not Mode.REGRESSION


@dataclass(frozen=True)
class Observation:
    x: int
    y: float

    def validate(self, mode: Mode, N: int, M: float = math.inf) -> None:
        if not 1 <= self.x <= N:
            raise InputError(f"x out of domain [1, {N}]: {self.x}")
        if mode.labelled:
            if self.y not in (-1, 1):
                raise InputError(f"label must be -1 or +1 in {mode.value} mode: {self.y}")
        elif not 0 <= self.y <= M:
            raise InputError(f"label out of range [0, {M}]: {self.y}")


@dataclass(frozen=True)
class DatasetMeta:
    m: int
    N: int
    M: float
    D: int
    mode: Mode


class Dataset:
    """An in-memory stream source.

    ``w`` is an optional vector of +1/-1 record signs for turnstile streams
    (insertions and deletions). Without it every record is an insertion.
    """

    def __init__(self, x, y, N: int, mode: Union[str, Mode] = Mode.REGRESSION,
                 M: Optional[float] = None, w=None):
        self.mode = Mode.parse(mode)
        self.x = np.ascontiguousarray(x, dtype=np.int64)
        if self.mode.labelled:
            self.y = np.ascontiguousarray(y, dtype=np.int8)
        else:
            self.y = np.ascontiguousarray(y, dtype=np.float64)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise InputError("x and y must be 1-d arrays of equal length")
        self.N = int(N)
        if self.N < 1:
            raise InputError(f"N must be >= 1, got {N}")
        if M is None:
            M = float(self.y.max()) if (not self.mode.labelled and len(self.y)) else 1.0
            M = M if M > 0 else 1.0
        self.M = float(M)
        self.w = None if w is None else np.ascontiguousarray(w, dtype=np.int8)
        self._validate()

    def _validate(self) -> None:
        if len(self.x):
            bad = np.flatnonzero((self.x < 1) | (self.x > self.N))
            if len(bad):
                i = int(bad[0])
                raise InputError(f"record {i + 1}: x out of domain [1, {self.N}]: {self.x[i]}")
            if self.mode.labelled:
                bad = np.flatnonzero((self.y != 1) & (self.y != -1))
                if len(bad):
                    raise InputError(f"record {int(bad[0]) + 1}: label must be -1 or +1")
            else:
                if self.M <= 0:
                    raise InputError("M must be positive in regression mode")
                bad = np.flatnonzero(~((self.y >= 0) & (self.y <= self.M)))
                if len(bad):
                    i = int(bad[0])
                    raise InputError(f"record {i + 1}: label out of range [0, {self.M}]: {self.y[i]}")
        if self.w is not None:
            if self.w.shape != self.x.shape or np.any((self.w != 1) & (self.w != -1)):
                raise InputError("record signs must be +1 or -1")

    def __len__(self) -> int:
        return len(self.x)

    def __iter__(self) -> Iterator[Observation]:
        for x, y in zip(self.x.tolist(), self.y.tolist()):
            yield Observation(x, y)

    def __repr__(self) -> str:
        return f"Dataset(mode={self.mode.value}, m={self.m}, N={self.N}, M={self.M:g})"

    @property
    def has_deletions(self) -> bool:
        return self.w is not None and bool(np.any(self.w < 0))

    @cached_property
    def m(self) -> int:
        return len(self.x) if self.w is None else int(self.w.sum(dtype=np.int64))

    @cached_property
    def D(self) -> int:
        return int(len(np.unique(self.net().x)))

    @property
    def meta(self) -> DatasetMeta:
        return DatasetMeta(m=self.m, N=self.N, M=self.M, D=self.D, mode=self.mode)

    def net(self) -> "Dataset":
        """The multiset left after cancelling every deletion against a matching insertion."""
        if self.w is None:
            return self
        keys = np.stack([self.x.astype(np.float64), self.y.astype(np.float64)], axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        counts = np.bincount(inv.ravel(), weights=self.w, minlength=len(uniq)).astype(np.int64)
        if np.any(counts < 0):
            raise InputError("deletion of an observation that was never inserted")
        # keep first-appearance order so replays stay deterministic
        first = np.full(len(uniq), len(self.x), dtype=np.int64)
        np.minimum.at(first, inv.ravel(), np.arange(len(self.x)))
        order = np.argsort(first, kind="stable")
        xs = np.repeat(uniq[order, 0], counts[order]).astype(np.int64)
        ys = np.repeat(uniq[order, 1], counts[order])
        return Dataset(xs, ys, self.N, self.mode, M=self.M)


@dataclass
class Chunk:
    """A contiguous block of one pass. ``offset`` is the stream index of ``x[0]``."""

    x: np.ndarray
    y: np.ndarray
    w: Optional[np.ndarray]
    offset: int

    def __len__(self) -> int:
        return len(self.x)

    @property
    def weights(self) -> np.ndarray:
        return np.ones(len(self.x)) if self.w is None else self.w.astype(np.float64)


class StreamHandle:
    """Pass-replayable view of a dataset with exact pass counting.

    Each call to :meth:`next_pass` returns a generator over the whole stream in its
    fixed order; ``passes_used`` is bumped when that generator is exhausted.
    """

    def __init__(self, dataset: Dataset, chunk_size: int = DEFAULT_CHUNK):
        if chunk_size < 1:
            raise InputError("chunk_size must be positive")
        self.dataset = dataset
        self.chunk_size = chunk_size
        self.passes_used = 0
        self.peak_words = 0

    @property
    def meta(self) -> DatasetMeta:
        return self.dataset.meta

    def next_pass(self) -> Iterator[Chunk]:
        ds = self.dataset
        for start in range(0, len(ds), self.chunk_size):
            stop = start + self.chunk_size
            w = None if ds.w is None else ds.w[start:stop]
            yield Chunk(ds.x[start:stop], ds.y[start:stop], w, start)
        self.passes_used += 1

    def elements(self) -> Iterator[Observation]:
        """One pass, element by element."""
        for chunk in self.next_pass():
            for x, y in zip(chunk.x.tolist(), chunk.y.tolist()):
                yield Observation(x, y)

    def account(self, words: int) -> None:
        """Record that ``words`` machine words are currently stored."""
        if words > self.peak_words:
            self.peak_words = int(words)


def open_stream(source, mode: Union[str, Mode] = Mode.REGRESSION, N: Optional[int] = None,
                M: Optional[float] = None, chunk_size: int = DEFAULT_CHUNK) -> StreamHandle:
    if isinstance(source, StreamHandle):
        return source
    if isinstance(source, Dataset):
        return StreamHandle(source, chunk_size)
    return StreamHandle(read_dataset(source, mode, N=N, M=M), chunk_size)


# --------------------------------------------------------------------------- I/O

def _parse_label(text: str, mode: Mode, lineno: int) -> float:
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"line {lineno}: malformed label {text!r}") from None
    if mode.labelled and value not in (-1.0, 1.0):
        raise InputError(f"line {lineno}: label must be -1 or +1, got {text!r}")
    return value


def _parse_int(text, what: str, lineno: int) -> int:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise InputError(f"line {lineno}: malformed {what} {text!r}") from None
    if not value.is_integer():
        raise InputError(f"line {lineno}: {what} must be an integer, got {text!r}")
    return int(value)


def _is_jsonl(path: Path) -> bool:
    if path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
        return True
    with path.open() as fh:
        for line in fh:
            if line.strip():
                return line.lstrip().startswith("{")
    return False


def _read_rows(path: Path, n_attrs: int):
    """Yield (lineno, [attr values...], label, sign) tuples from CSV or JSONL."""
    if _is_jsonl(path):
        with path.open() as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InputError(f"line {lineno}: malformed JSON ({exc.msg})") from None
                if not isinstance(obj, dict) or "y" not in obj:
                    raise InputError(f"line {lineno}: expected an object with x and y")
                if n_attrs == 1:
                    if "x" not in obj:
                        raise InputError(f"line {lineno}: missing x")
                    xs = [obj["x"]]
                else:
                    xs = obj.get("x")
                    if not isinstance(xs, list) or len(xs) != n_attrs:
                        raise InputError(f"line {lineno}: expected x to be a list of {n_attrs} values")
                yield lineno, xs, str(obj["y"]), obj.get("op", 1)
        return
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, row in enumerate(reader, 1):
            if not row or all(not c.strip() for c in row):
                continue
            if header is None:
                header = [c.strip().lower() for c in row]
                expected = ["x"] if n_attrs == 1 else [f"x{q}" for q in range(1, n_attrs + 1)]
                if header[:n_attrs] != expected or len(header) < n_attrs + 1 or header[n_attrs] != "y":
                    raise InputError(f"line {lineno}: expected header {','.join(expected + ['y'])}[,op]")
                has_op = len(header) > n_attrs + 1 and header[n_attrs + 1] == "op"
                continue
            width = n_attrs + 1 + int(has_op)
            if len(row) != width:
                raise InputError(f"line {lineno}: expected {width} fields, got {len(row)}")
            op = row[n_attrs + 1] if has_op else 1
            yield lineno, row[:n_attrs], row[n_attrs], op


def read_dataset(path, mode: Union[str, Mode] = Mode.REGRESSION, N: Optional[int] = None,
                 M: Optional[float] = None) -> Dataset:
    mode = Mode.parse(mode)
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    xs, ys, ws = [], [], []
    for lineno, xv, yv, op in _read_rows(path, 1):
        x = _parse_int(xv[0], "x", lineno)
        if x < 1 or (N is not None and x > N):
            raise InputError(f"line {lineno}: x out of domain [1, {N}]: {x}")
        y = _parse_label(yv, mode, lineno)
        if not mode.labelled and (y < 0 or (M is not None and y > M)):
            raise InputError(f"line {lineno}: label out of range [0, {M}]: {y}")
        sign = _parse_int(op, "op", lineno)
        if sign not in (1, -1):
            raise InputError(f"line {lineno}: op must be +1 or -1")
        xs.append(x)
        ys.append(y)
        ws.append(sign)
    if N is None:
        N = max(xs) if xs else 1
    w = ws if any(s < 0 for s in ws) else None
    return Dataset(np.array(xs, dtype=np.int64), np.array(ys), N, mode, M=M, w=w)


def _fmt_label(y, mode: Mode) -> str:
    if mode.labelled:
        return "+1" if y > 0 else "-1"
    return repr(float(y))


def write_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    ops = dataset.w
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        with path.open("w") as fh:
            for i, (x, y) in enumerate(zip(dataset.x.tolist(), dataset.y.tolist())):
                obj = {"x": x, "y": int(y) if dataset.mode.labelled else y}
                if ops is not None:
                    obj["op"] = int(ops[i])
                fh.write(json.dumps(obj) + "\n")
        return
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y"] + (["op"] if ops is not None else []))
        for i, (x, y) in enumerate(zip(dataset.x.tolist(), dataset.y.tolist())):
            row = [x, _fmt_label(y, dataset.mode)]
            if ops is not None:
                row.append("+1" if ops[i] > 0 else "-1")
            writer.writerow(row)


class MultiDataset:
    """Rows of ``d`` attribute values plus one label; each attribute lives in ``[1, N]``."""

    def __init__(self, X, y, N: int, mode: Union[str, Mode] = Mode.REGRESSION, M: Optional[float] = None):
        self.X = np.asarray(X, dtype=np.int64)
        if self.X.ndim != 2:
            raise InputError("attribute matrix must be 2-d")
        self.y = np.asarray(y)
        if len(self.y) != self.X.shape[0]:
            raise InputError("inconsistent row count between attributes and labels")
        self.mode = Mode.parse(mode)
        self.N = int(N)
        self.M = M
        self.columns = [Dataset(self.X[:, q], self.y, self.N, self.mode, M=M) for q in range(self.d)]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.X.shape[0]

    def attribute(self, q: int) -> Dataset:
        """The single-attribute dataset of column ``q`` (0-based)."""
        return self.columns[q]


def read_multi_dataset(path, d: int, mode: Union[str, Mode] = Mode.REGRESSION,
                       N: Optional[int] = None, M: Optional[float] = None) -> MultiDataset:
    mode = Mode.parse(mode)
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    rows, ys = [], []
    for lineno, xv, yv, _ in _read_rows(path, d):
        row = [_parse_int(v, "x", lineno) for v in xv]
        for v in row:
            if v < 1 or (N is not None and v > N):
                raise InputError(f"line {lineno}: x out of domain [1, {N}]: {v}")
        rows.append(row)
        ys.append(_parse_label(yv, mode, lineno))
    X = np.array(rows, dtype=np.int64).reshape(-1, d)
    if N is None:
        N = int(X.max()) if X.size else 1
    return MultiDataset(X, np.array(ys), N, mode, M=M)


# --------------------------------------------------------------------- generators

GENERATOR_KINDS = ("piecewise-step", "two-cluster", "uniform-noise", "time-drift")


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of a synthetic stream.

    ``noise`` in [0, 1]: label jitter amplitude (as a fraction of M) in regression mode,
    twice the label-flip probability in the labelled modes. ``step`` is the split that is
    exactly optimal at ``noise=0`` for the step-shaped kinds (defaults to ``N // 2``).
    """

    kind: str
    m: int
    N: int
    M: float = 1.0
    noise: float = 0.0
    seed: int = 0
    mode: Mode = Mode.REGRESSION
    step: Optional[int] = None

    def validate(self) -> None:
        if self.kind not in GENERATOR_KINDS:
            raise InputError(f"unknown generator kind {self.kind!r}; expected one of {GENERATOR_KINDS}")
        if self.m < 0 or self.N < 1:
            raise InputError("generator needs m >= 0 and N >= 1")
        if not 0.0 <= self.noise <= 1.0:
            raise InputError("noise must be in [0, 1]")
        if self.M <= 0:
            raise InputError("M must be positive")
        if self.step is not None and not 1 <= self.step <= self.N:
            raise InputError("step must lie in [1, N]")


def _levels(M: float):
    return 0.25 * M, 0.75 * M


def generate(spec: GeneratorSpec) -> Dataset:
    spec = GeneratorSpec(**{**spec.__dict__, "mode": Mode.parse(spec.mode)})
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    m, N, M = spec.m, spec.N, spec.M
    step = spec.step if spec.step is not None else max(1, N // 2)
    idx = np.arange(m)

    if spec.kind == "two-cluster":
        lo_hi = max(1, int(0.4 * N))
        hi_lo = min(N, max(lo_hi + 1, int(math.ceil(0.6 * N))))
        side = rng.random(m) < 0.5
        if hi_lo > N:  # N == 1: degenerate, everything in one cluster
            side[:] = False
        x = np.where(side, rng.integers(hi_lo, N + 1, size=m) if hi_lo <= N else 1,
                     rng.integers(1, lo_hi + 1, size=m))
        right = x > lo_hi
    elif spec.kind == "time-drift":
        x = rng.integers(1, N + 1, size=m)
        threshold = np.floor(N / 4 + (N / 2) * idx / max(m - 1, 1)).astype(np.int64)
        right = x > threshold
    else:
        x = rng.integers(1, N + 1, size=m)
        right = x > step

    if spec.mode is Mode.CATEGORICAL:
        # category c carries label bias p_c; step-shaped kinds make it deterministic
        assign = rng.random(N + 1) < 0.5
        if spec.kind == "uniform-noise":
            bias = rng.random(N + 1)
            y = np.where(rng.random(m) < bias[x], 1, -1)
        elif spec.kind == "time-drift":
            flip_at = rng.random(N + 1)
            pos = assign[x] ^ (idx / max(m - 1, 1) > flip_at[x])
            y = np.where(pos, 1, -1)
        else:
            y = np.where(assign[x], 1, -1)
        if spec.kind != "uniform-noise" and spec.noise > 0:
            flip = rng.random(m) < spec.noise / 2
            y = np.where(flip, -y, y)
        return Dataset(x, y, N, Mode.CATEGORICAL)

    if spec.mode is Mode.CLASSIFICATION:
        if spec.kind == "uniform-noise":
            y = np.where(rng.random(m) < 0.5, 1, -1)
        else:
            y = np.where(right, 1, -1)
            if spec.noise > 0:
                flip = rng.random(m) < spec.noise / 2
                y = np.where(flip, -y, y)
        return Dataset(x, y, N, Mode.CLASSIFICATION)

    if spec.kind == "uniform-noise":
        y = rng.random(m) * M
    else:
        lo, hi = _levels(M)
        y = np.where(right, hi, lo)
        if spec.noise > 0:
            y = y + spec.noise * M * (rng.random(m) - 0.5) * 0.5
    return Dataset(x, np.clip(y, 0.0, M), N, Mode.REGRESSION, M=M)


def with_deletions(dataset: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Append deletions of a random ``fraction`` of the records (a turnstile stream).

    The net multiset is the surviving records; deletions follow all insertions.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InputError("fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    doomed = np.flatnonzero(rng.random(len(dataset)) < fraction)
    rng.shuffle(doomed)
    x = np.concatenate([dataset.x, dataset.x[doomed]])
    y = np.concatenate([dataset.y, dataset.y[doomed]])
    w = np.concatenate([np.ones(len(dataset), dtype=np.int8), -np.ones(len(doomed), dtype=np.int8)])
    return Dataset(x, y, dataset.N, dataset.mode, M=dataset.M, w=w)


def toy_regression() -> Dataset:
    """The 14-point regression example (optimal split at 4)."""
    pts = [(1, 6), (1, 7), (2, 8), (3, 8), (3, 6), (2, 7), (4, 7),
           (5, 2), (6, 2), (6, 1), (7, 3), (8, 2), (9, 3), (9, 1)]
    x, y = zip(*pts)
    return Dataset(x, y, N=10, mode=Mode.REGRESSION, M=10.0)


def toy_classification() -> Dataset:
    """The 13-point classification example (optimal split at 4).

    Filled markers are label -1, hollow markers +1; the point at x=3 is listed twice.
    """
    filled = [1, 2, 3, 3, 4, 9]
    hollow = [1, 2, 5, 6, 7, 8, 9]
    pts = sorted([(x, -1) for x in filled] + [(x, 1) for x in hollow])
    x, y = zip(*pts)
    return Dataset(x, y, N=10, mode=Mode.CLASSIFICATION)
