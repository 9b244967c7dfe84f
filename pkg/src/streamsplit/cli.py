"""Command-line driver: ``streamsplit generate|oracle|run|mpc|sweep|report``.

Exit codes: 0 ok, 2 input error, 3 budget or guard violation, 4 guarantee
violation (only raised under ``--strict``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from .driver import (ALGORITHMS, MPC_INFO, Params, algorithm_mode, load_config, read_sweep_csv,
                     run_algorithm, run_mpc, run_multi_attribute, summarize, sweep, write_sweep)
from .errors import StreamSplitError
from .oracle import oracle, oracle_classification, oracle_regression
from .sketch import DEFAULT_C
from .stream import (GENERATOR_KINDS, GeneratorSpec, Mode, generate, read_dataset, read_multi_dataset,
                     with_deletions, write_dataset)


def _emit(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, default=str)
    if path:
        Path(path).write_text(text + "\n")
    print(text)


def _add_input(p: argparse.ArgumentParser, mode: bool = True) -> None:
    p.add_argument("--in", dest="inp", required=True, help="CSV (x,y[,op]) or JSONL input")
    if mode:
        p.add_argument("--mode", default=None, choices=[m.value for m in Mode] + ["reg", "cls", "cat"])
    p.add_argument("--bign", type=int, default=None, help="domain size N (default: largest x)")
    p.add_argument("--bigm", type=float, default=None, help="label bound M (regression)")


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--C", type=float, default=DEFAULT_C, help="sampling constant")
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.add_argument("--strict", action="store_true", help="exit 4 if the guarantee fails against the oracle")
    p.add_argument("--no-oracle", action="store_true", help="skip the oracle comparison")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamsplit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--kind", choices=GENERATOR_KINDS, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--bign", type=int, required=True)
    g.add_argument("--bigm", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mode", default="regression")
    g.add_argument("--step", type=int, default=None)
    g.add_argument("--deletions", type=float, default=0.0, metavar="FRACTION",
                   help="append deletions of this fraction of the records")
    g.add_argument("--out", required=True)

    o = sub.add_parser("oracle", help="exact optimum by brute force")
    _add_input(o)
    o.add_argument("--curve", action="store_true", help="include the loss at every candidate")
    o.add_argument("--all-splits", action="store_true", help="evaluate every j in [1, N]")

    r = sub.add_parser("run", help="run a streaming algorithm")
    r.add_argument("--algo", required=True, choices=list(ALGORITHMS))
    _add_input(r, mode=False)
    _add_params(r)
    r.add_argument("--deletions", action="store_true", help="use the dyadic count-min estimators")
    r.add_argument("--attrs", type=int, default=1, help="number of attribute columns (x1..xd,y)")

    mp = sub.add_parser("mpc", help="run an algorithm on the MPC simulator")
    mp.add_argument("--algo", required=True, choices=list(MPC_INFO))
    _add_input(mp, mode=False)
    _add_params(mp)
    mp.add_argument("--machines", type=int, default=None)
    mp.add_argument("--budget-words", type=int, default=None)
    mp.add_argument("--trace", default=None, help="write the per-round message trace here")

    s = sub.add_parser("sweep", help="run a YAML/JSON sweep config")
    s.add_argument("--config", required=True)
    s.add_argument("--csv", default=None, help="per-cell CSV output")
    s.add_argument("--json", default=None, help="summary JSON output")

    rep = sub.add_parser("report", help="summarise run reports or a sweep CSV")
    rep.add_argument("paths", nargs="+")
    return parser


def cmd_generate(args) -> int:
    spec = GeneratorSpec(args.kind, args.m, args.bign, args.bigm, args.noise, args.seed,
                         Mode.parse(args.mode), args.step)
    ds = generate(spec)
    if args.deletions > 0:
        ds = with_deletions(ds, args.deletions, args.seed)
    write_dataset(ds, args.out)
    print(json.dumps({"out": args.out, "records": len(ds), "m": ds.m, "N": ds.N, "D": ds.D,
                      "mode": ds.mode.value}))
    return 0


def cmd_oracle(args) -> int:
    ds = read_dataset(args.inp, args.mode or "regression", args.bign, args.bigm)
    if ds.mode is Mode.REGRESSION:
        res = oracle_regression(ds, args.all_splits, args.curve)
    elif ds.mode is Mode.CLASSIFICATION:
        res = oracle_classification(ds, args.all_splits, args.curve)
    else:
        res = oracle(ds)
    best = res.best.__dict__.copy()
    for key in ("A", "B"):
        if key in best:
            best[key] = sorted(best[key])
    if best.get("counts") is not None:
        best["counts"] = best["counts"].__dict__
    out = {"mode": ds.mode.value, "m": ds.m, "N": ds.N, "D": ds.D, "opt": res.opt, "best": best}
    if res.full_curve is not None:
        out["curve"] = [{"j": j, "loss": v} for j, v in res.full_curve]
    _emit(out, None)
    return 0


def _params(args) -> Params:
    return Params(args.eps, args.beta, args.seed, args.C, getattr(args, "deletions", False))


def cmd_run(args) -> int:
    mode = algorithm_mode(args.algo)
    if args.attrs > 1:
        data = read_multi_dataset(args.inp, args.attrs, mode, args.bign, args.bigm)
        res = run_multi_attribute(data, args.algo, _params(args), not args.no_oracle, args.strict)
        _emit(res.to_dict(), args.report)
        return 0
    ds = read_dataset(args.inp, mode, args.bign, args.bigm)
    report, _ = run_algorithm(ds, args.algo, _params(args), not args.no_oracle, args.strict)
    _emit(report.to_dict(), args.report)
    return 0


def cmd_mpc(args) -> int:
    ds = read_dataset(args.inp, algorithm_mode(args.algo), args.bign, args.bigm)
    try:
        report, _, cluster = run_mpc(ds, args.algo, _params(args), args.machines, args.budget_words,
                                     not args.no_oracle, args.strict)
    except StreamSplitError as exc:
        ledger = getattr(exc, "ledger", None)
        if ledger is not None and args.trace:
            Path(args.trace).write_text(json.dumps(ledger, indent=1) + "\n")
        raise
    if args.trace:
        Path(args.trace).write_text(json.dumps(cluster.trace(), indent=1) + "\n")
    out = report.to_dict()
    out["machines"] = len(cluster)
    _emit(out, args.report)
    return 0


def cmd_sweep(args) -> int:
    rows, summary = sweep(load_config(args.config))
    write_sweep(rows, summary, args.csv, args.json)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.paths:
        if path.endswith(".csv"):
            rows.extend(read_sweep_csv(path))
            continue
        obj = json.loads(Path(path).read_text())
        rows.extend(obj.get("per_attribute", [obj]))
    flat = [{**r, **{k: r.get("params", {}).get(k, r.get(k)) for k in ("eps", "beta")}} for r in rows]
    print(json.dumps(summarize(flat), indent=2))
    return 0


COMMANDS = {"generate": cmd_generate, "oracle": cmd_oracle, "run": cmd_run, "mpc": cmd_mpc,
            "sweep": cmd_sweep, "report": cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except StreamSplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
