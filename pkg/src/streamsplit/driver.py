"""Algorithm registry, run reports, multi-attribute runs and parameter sweeps."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import yaml

from . import classification as cls
from . import regression as reg
from .errors import GuaranteeViolation, InputError
from .mpc import MPC_ALGORITHMS, Cluster, distribute
from .oracle import (CategoricalPartition, categorical_loss, classification_loss_at, oracle,
                     regression_loss_at)
from .sketch import DEFAULT_C
from .stream import Dataset, GeneratorSpec, Mode, MultiDataset, StreamHandle, generate

SCHEMA = 1
# absolute slack for the deterministic guarantees (floating point only)
DETERMINISTIC_SLACK = 1e-9


@dataclass(frozen=True)
class Params:
    eps: float = 0.1
    beta: float = 0.5
    seed: int = 0
    C: float = DEFAULT_C
    deletions: bool = False


@dataclass(frozen=True)
class AlgoInfo:
    mode: Mode
    run: Callable[[StreamHandle, Params], Any]
    # bound(opt, params, meta) -> largest loss the guarantee allows
    bound: Callable[[float, Params, Any], float]
    pass_budget: Optional[Callable[[Params, Any], int]] = None


def _mult_bound(opt, p, meta):
    return (1 + p.eps) * opt + DETERMINISTIC_SLACK


def _lowpass_phases(p: Params, meta) -> int:
    return math.ceil(1 / p.beta)


ALGORITHMS: Dict[str, AlgoInfo] = {
    "reg-exact": AlgoInfo(Mode.REGRESSION, lambda h, p: reg.exact_split_1pass(h),
                          lambda opt, p, meta: opt + DETERMINISTIC_SLACK, lambda p, meta: 1),
    "reg-additive": AlgoInfo(Mode.REGRESSION,
                             lambda h, p: reg.additive_split_2pass(h, p.eps, p.seed, p.C, p.deletions or None),
                             lambda opt, p, meta: opt + 5 * p.eps * meta.M ** 2, lambda p, meta: 2),
    "reg-mult": AlgoInfo(Mode.REGRESSION, lambda h, p: reg.multiplicative_split(h, p.eps), _mult_bound,
                         lambda p, meta: 2 * (math.ceil(math.log2(max(meta.N, 1))) + 1)),
    "reg-lowpass": AlgoInfo(Mode.REGRESSION, lambda h, p: reg.multiplicative_split_lowpass(h, p.eps, p.beta),
                            _mult_bound, lambda p, meta: 2 * _lowpass_phases(p, meta) + 2),
    "cls-additive": AlgoInfo(Mode.CLASSIFICATION,
                             lambda h, p: cls.additive_cls_split_1pass(h, p.eps, p.seed, p.C, p.deletions or None),
                             lambda opt, p, meta: opt + p.eps, lambda p, meta: 1),
    "cls-mult": AlgoInfo(Mode.CLASSIFICATION, lambda h, p: cls.multiplicative_cls_split(h, p.eps), _mult_bound,
                         lambda p, meta: math.ceil(math.log2(max(meta.N, 1))) + 1),
    "cls-lowpass": AlgoInfo(Mode.CLASSIFICATION,
                            lambda h, p: cls.multiplicative_cls_split_lowpass(h, p.eps, p.beta), _mult_bound,
                            lambda p, meta: _lowpass_phases(p, meta) + 1),
    "cat-additive": AlgoInfo(Mode.CATEGORICAL, lambda h, p: cls.categorical_additive(h, p.eps, p.seed, p.C),
                             lambda opt, p, meta: opt + p.eps, lambda p, meta: 1),
}

MPC_INFO: Dict[str, Tuple[Mode, Callable[[float, Params, Any], float], Callable[[Params], int]]] = {
    "mpc-reg-additive": (Mode.REGRESSION, lambda opt, p, meta: opt + 10 * meta.M ** 2 / math.sqrt(meta.m),
                         lambda p: 4),
    "mpc-reg-mult": (Mode.REGRESSION, _mult_bound, lambda p: int(2 / p.beta + 2)),
    "mpc-cls-additive": (Mode.CLASSIFICATION, lambda opt, p, meta: opt + 1 / math.sqrt(meta.m), lambda p: 1),
    "mpc-cls-mult": (Mode.CLASSIFICATION, _mult_bound, lambda p: int(2 / p.beta + 2)),
}


def algorithm_mode(algo: str) -> Mode:
    if algo in ALGORITHMS:
        return ALGORITHMS[algo].mode
    if algo in MPC_INFO:
        return MPC_INFO[algo][0]
    raise InputError(f"unknown algorithm {algo!r}; choose from {', '.join(list(ALGORITHMS) + list(MPC_INFO))}")


@dataclass
class RunReport:
    algo: str
    params: Dict[str, Any]
    j: Optional[int]
    A: Optional[List[int]]
    loss: float
    estimated_loss: float
    opt: Optional[float]
    ratio: Optional[float]
    gap: Optional[float]
    bound: Optional[float]
    guarantee_holds: Optional[bool]
    passes: Optional[int]
    pass_budget: Optional[int]
    peak_words: Optional[int]
    rounds: Optional[int]
    wall_ms: float
    schema: int = SCHEMA
    attribute: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def true_loss(dataset: Dataset, result) -> float:
    """Exact loss of an algorithm's output on the full dataset."""
    if isinstance(result, CategoricalPartition):
        return categorical_loss(dataset, result.A)
    if dataset.mode is Mode.REGRESSION:
        return regression_loss_at(dataset, result.j).loss
    return classification_loss_at(dataset, result.j).loss


def _finish(algo: str, params: Params, dataset: Dataset, result, bound_fn, wall_ms: float,
            passes=None, pass_budget=None, peak_words=None, rounds=None,
            with_oracle: bool = True, strict: bool = False) -> RunReport:
    loss = true_loss(dataset, result)
    opt = ratio = gap = bound = holds = None
    if with_oracle:
        opt = oracle(dataset).opt
        gap = loss - opt
        ratio = loss / opt if opt > 0 else (1.0 if loss <= DETERMINISTIC_SLACK else math.inf)
        bound = bound_fn(opt, params, dataset.meta)
        holds = loss <= bound and (pass_budget is None or passes is None or passes <= pass_budget)
    is_cat = isinstance(result, CategoricalPartition)
    report = RunReport(
        algo=algo, params=asdict(params),
        j=None if is_cat else int(result.j), A=sorted(result.A) if is_cat else None,
        loss=loss, estimated_loss=float(result.loss), opt=opt, ratio=ratio, gap=gap, bound=bound,
        guarantee_holds=holds, passes=passes, pass_budget=pass_budget, peak_words=peak_words,
        rounds=rounds, wall_ms=wall_ms)
    if strict and holds is False:
        raise GuaranteeViolation(f"{algo}: loss {loss:.6g} exceeds bound {bound:.6g} "
                                 f"(opt {opt:.6g}, passes {passes}/{pass_budget})")
    return report


def _check_mode(dataset: Dataset, mode: Mode, algo: str) -> None:
    if dataset.mode is not mode:
        raise InputError(f"{algo} needs a {mode.value} dataset, got {dataset.mode.value}")


def run_algorithm(dataset: Dataset, algo: str, params: Params = Params(), with_oracle: bool = True,
                  strict: bool = False) -> Tuple[RunReport, Any]:
    """Run a streaming algorithm on its own handle; returns the report and the raw result."""
    if algo not in ALGORITHMS:
        algorithm_mode(algo)  # raises with the list of names
        raise InputError(f"{algo} is an MPC algorithm; use run_mpc")
    info = ALGORITHMS[algo]
    _check_mode(dataset, info.mode, algo)
    handle = StreamHandle(dataset)
    t0 = time.perf_counter()
    result = info.run(handle, params)
    wall = (time.perf_counter() - t0) * 1e3
    budget = info.pass_budget(params, dataset.meta) if info.pass_budget else None
    report = _finish(algo, params, dataset, result, info.bound, wall, handle.passes_used, budget,
                     handle.peak_words, None, with_oracle, strict)
    return report, result


def default_machines(algo: str, m: int, beta: float) -> int:
    if algo.endswith("additive"):
        return max(1, int(round(math.sqrt(m))))
    return max(1, int(round(m ** (1 - beta))))


def run_mpc(dataset: Dataset, algo: str, params: Params = Params(), machines: Optional[int] = None,
            budget_words: Optional[int] = None, with_oracle: bool = True,
            strict: bool = False) -> Tuple[RunReport, Any, Cluster]:
    if algo not in MPC_INFO:
        algorithm_mode(algo)
        raise InputError(f"{algo} is not an MPC algorithm; use run_algorithm")
    mode, bound_fn, rounds_fn = MPC_INFO[algo]
    _check_mode(dataset, mode, algo)
    machines = machines or default_machines(algo, dataset.m, params.beta)
    cluster = distribute(dataset, machines, budget_words)
    t0 = time.perf_counter()
    result = MPC_ALGORITHMS[algo](cluster, params.eps, params.beta, params.seed, params.C)
    wall = (time.perf_counter() - t0) * 1e3
    report = _finish(algo, params, dataset.net(), result, bound_fn, wall, None, None, None,
                     cluster.rounds, with_oracle, False)
    round_budget = rounds_fn(params)
    audits_ok = all(a.ok for a in cluster.audits)
    if report.guarantee_holds is not None:
        report.guarantee_holds = report.guarantee_holds and cluster.rounds <= round_budget and audits_ok
    if strict and report.guarantee_holds is False:
        raise GuaranteeViolation(f"{algo}: loss {report.loss:.6g} vs bound {report.bound:.6g}, "
                                 f"rounds {cluster.rounds}/{round_budget}, audits ok={audits_ok}")
    return report, result, cluster


# ---------------------------------------------------------- multi-attribute

@dataclass
class MultiAttributeResult:
    per_attribute: List[RunReport]
    q_star: int  # 1-based attribute index
    j_star: int
    loss: float
    passes: int
    peak_words: int

    def to_dict(self) -> Dict[str, Any]:
        return {"schema": SCHEMA, "q_star": self.q_star, "j_star": self.j_star, "loss": self.loss,
                "passes": self.passes, "peak_words": self.peak_words,
                "per_attribute": [r.to_dict() for r in self.per_attribute]}


def run_multi_attribute(data: MultiDataset, algo: str, params: Params = Params(),
                        with_oracle: bool = True, strict: bool = False) -> MultiAttributeResult:
    """Run the algorithm on every attribute; the instances share passes, so passes
    are the maximum over attributes and stored words add up."""
    if algo not in ALGORITHMS or ALGORITHMS[algo].mode is Mode.CATEGORICAL:
        raise InputError(f"multi-attribute runs support the threshold-split algorithms, not {algo!r}")
    reports = []
    for q in range(data.d):
        report, _ = run_algorithm(data.attribute(q), algo, params, with_oracle, strict)
        report.attribute = q + 1
        reports.append(report)
    best = min(reports, key=lambda r: (r.loss, r.attribute))
    return MultiAttributeResult(reports, best.attribute, best.j, best.loss,
                                max(r.passes for r in reports), sum(r.peak_words for r in reports))


# ------------------------------------------------------------------- sweeps

@dataclass
class SweepConfig:
    algorithms: List[Dict[str, Any]]
    datasets: List[Dict[str, Any]]
    seeds: List[int] = field(default_factory=list)


def load_config(path) -> SweepConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise InputError(f"config parse error in {path}: {exc}") from None
    return parse_config(raw)


def parse_config(raw) -> SweepConfig:
    if not isinstance(raw, dict):
        raise InputError("config must be a mapping")
    algos = raw.get("algorithms", [])
    datasets = raw.get("datasets", [])
    seeds = raw.get("seeds", [])
    if isinstance(seeds, dict):
        seeds = list(range(int(seeds.get("start", 0)), int(seeds.get("start", 0)) + int(seeds["count"])))
    algos = [{"algo": a} if isinstance(a, str) else dict(a) for a in algos]
    for a in algos:
        if "algo" not in a:
            raise InputError("every algorithm entry needs an 'algo' key")
        algorithm_mode(a["algo"])
    for d in datasets:
        if not isinstance(d, dict) or "kind" not in d:
            raise InputError("every dataset entry needs a 'kind' key")
    return SweepConfig(algos, [dict(d) for d in datasets], [int(s) for s in seeds])


def _dataset_from(entry: Dict[str, Any], seed: int, mode: Mode) -> Dataset:
    spec = GeneratorSpec(kind=entry["kind"], m=int(entry.get("m", 1000)), N=int(entry.get("N", 100)),
                         M=float(entry.get("M", 1.0)), noise=float(entry.get("noise", 0.0)),
                         seed=int(entry.get("seed", seed)), mode=Mode.parse(entry.get("mode", mode)),
                         step=entry.get("step"))
    return generate(spec)


CSV_FIELDS = ["algo", "dataset", "seed", "eps", "beta", "C", "j", "A", "loss", "opt", "gap", "ratio",
              "bound", "guarantee_holds", "passes", "pass_budget", "peak_words", "rounds", "wall_ms"]


def sweep(config: SweepConfig) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    """Run every (dataset, algorithm, seed) cell; returns CSV rows and a per-algorithm summary."""
    rows: List[Dict[str, Any]] = []
    for seed in config.seeds:
        for di, entry in enumerate(config.datasets):
            for a in config.algorithms:
                algo = a["algo"]
                params = Params(eps=float(a.get("eps", 0.1)), beta=float(a.get("beta", 0.5)), seed=seed,
                                C=float(a.get("C", DEFAULT_C)), deletions=bool(a.get("deletions", False)))
                ds = _dataset_from(entry, seed, algorithm_mode(algo))
                if algo in MPC_INFO:
                    report = run_mpc(ds, algo, params, a.get("machines"), a.get("budget_words"))[0]
                else:
                    report = run_algorithm(ds, algo, params)[0]
                row = {k: v for k, v in report.to_dict().items() if k in CSV_FIELDS}
                row.update(dataset=di, seed=seed, eps=params.eps, beta=params.beta, C=params.C)
                if row.get("A") is not None:
                    row["A"] = " ".join(map(str, row["A"]))
                rows.append(row)
    return rows, summarize(rows)


def _ints(rows: List[Dict[str, Any]], key: str) -> List[int]:
    return [int(float(r[key])) for r in rows if r.get(key) not in (None, "")]


def summarize(rows: List[Dict[str, Any]]) -> Dict[str, Any]:
    out: Dict[str, Any] = {"schema": SCHEMA, "cells": len(rows), "algorithms": {}}
    groups: Dict[Tuple[str, float, float], List[Dict[str, Any]]] = {}
    for r in rows:
        groups.setdefault((r["algo"], float(r["eps"]), float(r["beta"])), []).append(r)
    for (algo, eps, beta), rs in sorted(groups.items()):
        gaps = np.array([float(r["gap"]) for r in rs])
        ratios = np.array([float(r["ratio"]) for r in rs])
        ok = [str(r["guarantee_holds"]) in ("True", "true", "1") for r in rs]
        passes, rounds, words = (_ints(rs, k) for k in ("passes", "rounds", "peak_words"))
        out["algorithms"][f"{algo} eps={eps:g} beta={beta:g}"] = {
            "algo": algo, "eps": eps, "beta": beta, "runs": len(rs),
            "success_rate": float(np.mean(ok)),
            "gap_mean": float(gaps.mean()), "gap_max": float(gaps.max()),
            "ratio_max": float(ratios[np.isfinite(ratios)].max()) if np.isfinite(ratios).any() else None,
            "passes_max": max(passes) if passes else None,
            "rounds_max": max(rounds) if rounds else None,
            "peak_words_max": max(words) if words else None,
        }
    return out


def write_sweep(rows: List[Dict[str, Any]], summary: Dict[str, Any], csv_path=None, json_path=None) -> None:
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
            writer.writeheader()
            for r in rows:
                writer.writerow({k: r.get(k) for k in CSV_FIELDS})
    if json_path:
        Path(json_path).write_text(json.dumps(summary, indent=2) + "\n")


def read_sweep_csv(path) -> List[Dict[str, Any]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
