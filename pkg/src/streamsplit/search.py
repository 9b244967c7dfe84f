"""Guess grids and the lock-step binary search behind the (1+eps)-approximations.

Every guess ``(z_left, z_right)`` runs its own binary search over ``[1, N]``. Left
error is non-decreasing in the split and right error non-increasing, so a probe
``j`` tells a guess which half can still contain a split meeting both budgets.
:class:`GuessSearch` keeps all guesses as flat numpy arrays so one stream pass (or
one MPC round) can serve the probes of every guess at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import InputError

ACTIVE, FEASIBLE, INFEASIBLE, EXHAUSTED = 0, 1, 2, 3
_STATUS_NAMES = {ACTIVE: "active", FEASIBLE: "feasible", INFEASIBLE: "infeasible", EXHAUSTED: "exhausted"}


class Case(Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    GO_LEFT = "go-left"
    GO_RIGHT = "go-right"


def grid_axis(upper: float, eps: float, floor: float = 1.0) -> np.ndarray:
    """``{0} ∪ {floor * (1+eps)^e : e = 0..E}`` with ``E`` the least exponent reaching ``upper``."""
    if not eps > 0:
        raise InputError("eps must be positive")
    if not floor > 0:
        raise InputError("grid floor must be positive")
    top = 0
    if upper > floor:
        top = max(0, math.ceil(math.log(upper / floor) / math.log1p(eps)))
        while floor * (1 + eps) ** top < upper:
            top += 1
    return np.concatenate([[0.0], floor * (1.0 + eps) ** np.arange(top + 1)])


def guess_grid(m: int, M: float, eps: float, floor: float = 1.0) -> List[Tuple[float, float]]:
    """All ``(z_left, z_right)`` pairs over the per-axis grid for error masses up to ``m M^2``."""
    axis = grid_axis(m * M * M, eps, floor).tolist()
    return [(zl, zr) for zl in axis for zr in axis]


def classify_guess_case(err_left: float, err_right: float, z_left: float, z_right: float,
                        tol: float = 0.0) -> Case:
    if min(err_left, err_right, z_left, z_right) < 0:
        raise InputError("errors and guesses must be non-negative")
    ok_left = err_left <= z_left + tol
    ok_right = err_right <= z_right + tol
    if ok_left and ok_right:
        return Case.FEASIBLE
    if not ok_left and not ok_right:
        return Case.INFEASIBLE
    if not ok_left:
        return Case.GO_LEFT
    return Case.GO_RIGHT


@dataclass(frozen=True)
class Guess:
    z_left: float
    z_right: float
    j_l: int
    j_r: int
    status: str
    j: Optional[int] = None


def probe_tree(lo: np.ndarray, hi: np.ndarray, levels: int, N: int) -> np.ndarray:
    """Every split a binary search could probe in its next ``levels`` steps, for each interval."""
    keep = lo <= hi
    lo, hi = lo[keep], hi[keep]
    out = []
    for _ in range(levels):
        if len(lo) == 0:
            break
        key = np.unique(lo * (N + 2) + hi)
        lo, hi = key // (N + 2), key % (N + 2)
        mid = (lo + hi) // 2
        out.append(mid)
        lo, hi = np.concatenate([lo, mid + 1]), np.concatenate([mid - 1, hi])
        keep = lo <= hi
        lo, hi = lo[keep], hi[keep]
    if not out:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(out))


class GuessSearch:
    """Binary searches for every guess of a ``left_axis x right_axis`` grid, advanced in lock step.

    ``tol`` absorbs floating-point noise in the error evaluations; it is added to both
    budgets when testing feasibility.
    """

    def __init__(self, left_axis, right_axis, N: int, tol: float = 0.0, trace: bool = False):
        zl, zr = np.meshgrid(np.asarray(left_axis, float), np.asarray(right_axis, float), indexing="ij")
        self.zl = zl.ravel()
        self.zr = zr.ravel()
        n = len(self.zl)
        self.N = N
        self.tol = tol
        self.lo = np.ones(n, dtype=np.int64)
        self.hi = np.full(n, N, dtype=np.int64)
        self.status = np.zeros(n, dtype=np.int8)
        self.found = np.full(n, -1, dtype=np.int64)
        self.feasible: Dict[int, Tuple[float, object]] = {}
        self.steps = 0
        self.trace: Optional[List[Tuple[np.ndarray, np.ndarray]]] = [] if trace else None

    def __len__(self) -> int:
        return len(self.zl)

    @property
    def words(self) -> int:
        return 5 * len(self.zl) + 2 * len(self.feasible)

    def any_active(self) -> bool:
        return bool(np.any(self.status == ACTIVE))

    def guess(self, i: int) -> Guess:
        j = int(self.found[i]) if self.found[i] >= 0 else None
        return Guess(float(self.zl[i]), float(self.zr[i]), int(self.lo[i]), int(self.hi[i]),
                     _STATUS_NAMES[int(self.status[i])], j)

    def midpoints(self) -> np.ndarray:
        act = self.status == ACTIVE
        return np.unique((self.lo[act] + self.hi[act]) // 2)

    def probe_tree(self, levels: int) -> np.ndarray:
        act = self.status == ACTIVE
        return probe_tree(self.lo[act], self.hi[act], levels, self.N)

    def advance(self, probes: np.ndarray, err_left: np.ndarray, err_right: np.ndarray,
                payload: Optional[Callable[[int], object]] = None) -> None:
        """One binary-search step for every active guess; all their midpoints must be in ``probes``."""
        act = np.flatnonzero(self.status == ACTIVE)
        if len(act) == 0:
            return
        if self.trace is not None:
            self.trace.append((self.lo.copy(), self.hi.copy()))
        mids = (self.lo[act] + self.hi[act]) // 2
        pos = np.searchsorted(probes, mids)
        if np.any(pos >= len(probes)) or np.any(probes[np.minimum(pos, len(probes) - 1)] != mids):
            raise AssertionError("a guess probed a split that was not evaluated")
        el, er = err_left[pos], err_right[pos]
        ok_l = el <= self.zl[act] + self.tol
        ok_r = er <= self.zr[act] + self.tol

        feas = ok_l & ok_r
        if np.any(feas):
            idx = act[feas]
            self.status[idx] = FEASIBLE
            self.found[idx] = mids[feas]
            values = self.zl[idx] + self.zr[idx]
            for j in np.unique(mids[feas]).tolist():
                v = float(values[mids[feas] == j].min())
                if j not in self.feasible or self.feasible[j][0] > v:
                    k = int(pos[feas][mids[feas] == j][0])
                    self.feasible[j] = (v, payload(k) if payload else None)
        self.status[act[~ok_l & ~ok_r]] = INFEASIBLE
        go_left = ~ok_l & ok_r
        self.hi[act[go_left]] = mids[go_left] - 1
        go_right = ok_l & ~ok_r
        self.lo[act[go_right]] = mids[go_right] + 1
        done = (self.status == ACTIVE) & (self.lo > self.hi)
        self.status[done] = EXHAUSTED
        self.steps += 1

    def descend(self, levels: int, probes: np.ndarray, err_left: np.ndarray, err_right: np.ndarray,
                payload: Optional[Callable[[int], object]] = None) -> None:
        for _ in range(levels):
            if not self.any_active():
                break
            self.advance(probes, err_left, err_right, payload)

    def best(self) -> Tuple[int, float, object]:
        """The recorded split with the smallest guaranteed error mass (smallest ``j`` on ties)."""
        if not self.feasible:
            raise AssertionError("no guess found a feasible split")
        j = min(self.feasible, key=lambda k: (self.feasible[k][0], k))
        value, data = self.feasible[j]
        return j, value, data


def lowpass_depth(beta: float, N: int) -> int:
    """Binary-search steps simulated per phase: ``ceil(beta log2 N) + 1`` (at least 2)."""
    if not 0 < beta < 1:
        raise InputError("beta must be in (0, 1)")
    return max(1, math.ceil(beta * math.log2(max(N, 2)))) + 1
