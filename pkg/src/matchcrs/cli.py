"""Batch experiment front end.

Subcommands: estimate, verify, beta, gamma, limit, decompose, pipeline,
generate.  Results go to stdout plus optional JSON-records (one per line) and
CSV files; --plot renders a matplotlib figure next to the delimited output.

Exit codes: 0 success, 1 input error (or failed verification), 2 capability
error, 64 usage error.  --seed falls back to the CRS_DEFAULT_SEED environment
variable, then to 0; reruns with identical arguments reproduce identical
numeric output (the wall_time field aside).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from fractions import Fraction
from typing import Optional, Sequence

from .analytics import (
    bipartite_constant,
    describe_instance,
    estimate_balancedness,
    general_constant,
    general_constant_series,
    generate_instance,
    optimality_limit,
    parse_instance,
    scheme_balancedness_bound,
)
from .csfm import (
    continuous_greedy,
    multilinear_estimate,
    round_and_evaluate,
    synthetic_oracle,
)
from .errors import CapabilityError, InputError
from .graph import dump_instance, load_instance, two_coloring
from .oracle import BalancednessReport
from .randomness import RngStream
from .sampler import birkhoff_decompose
from .schemes import CLI_SCHEMES, parse_scheme
from .verify import NamedInstance, builtin_battery, run_battery

USAGE_EXIT = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _resolve_seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("CRS_DEFAULT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise InputError(f"CRS_DEFAULT_SEED={env!r} is not an integer") from exc
    return 0


def _write_records(path: str, records: list[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def _write_csv(path: str, header: list[str], rows: list[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _report_records(report: BalancednessReport, meta: dict) -> list[dict]:
    records = [dict(meta, record="meta")]
    for i, e in enumerate(report.edges):
        rec = {
            "record": "edge",
            "scheme": report.scheme,
            "instance": meta.get("instance"),
            "edge": int(e),
            "mean": float(report.ratios[i]),
            "ci": float(report.ci_half_widths[i]) if report.ci_half_widths else None,
            "trials": report.trials,
            "seed": meta.get("seed"),
        }
        records.append(rec)
    records.append({
        "record": "summary",
        "min_edge": int(report.min_edge),
        "min_ratio": float(report.minimum),
        "mode": report.mode,
    })
    return records


def build_parser() -> _Parser:
    parser = _Parser(prog="matchcrs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials_default=100000):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trials", type=int, default=trials_default)
        p.add_argument("--out", help="JSON records file (one per line)")
        p.add_argument("--plot", help="render a PNG figure to this path")

    p = sub.add_parser("estimate", help="Monte Carlo balancedness of a scheme")
    p.add_argument("--scheme", required=True, choices=sorted(CLI_SCHEMES))
    p.add_argument("--instance", required=True, help="kind:params, e.g. knn:20,1")
    p.add_argument("--csv", help="per-edge CSV table")
    p.add_argument("--jobs", type=int, default=1)
    common(p)

    p = sub.add_parser("verify", help="run the invariant battery, emit pass/fail CSV")
    p.add_argument("--graph", help="instance JSON file (default: built-in battery)")
    p.add_argument("--max-edges", type=int, default=8)
    p.add_argument("--scheme", action="append", choices=sorted(CLI_SCHEMES),
                   help="restrict to these schemes (repeatable)")
    common(p, trials_default=20000)

    p = sub.add_parser("beta", help="bipartite balancedness constant")
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--grid", help="start:stop:count sweep")
    common(p, trials_default=0)

    p = sub.add_parser("gamma", help="general-matching balancedness constant")
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--grid", help="start:stop:count sweep")
    common(p, trials_default=0)

    p = sub.add_parser("limit", help="hard-instance ceiling E[1/(1+max Bin,Bin)]")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--b", type=float, default=1.0)
    common(p, trials_default=1000000)

    p = sub.add_parser("decompose", help="exact convex decomposition of a marginal")
    p.add_argument("--graph", required=True, help="instance JSON file")
    p.add_argument("--marginals", required=True,
                   help='JSON file {"values": [...]}; "1/3" strings stay exact')
    p.add_argument("--out", required=True, help="CSV: weight, comma-joined edge ids")

    p = sub.add_parser("pipeline", help="submodular maximization + rounding demo")
    p.add_argument("--function", choices=["modular", "coverage"], default="coverage")
    p.add_argument("--scheme", required=True, choices=sorted(CLI_SCHEMES))
    p.add_argument("--instance", required=True)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--samples", type=int, default=30)
    common(p, trials_default=2000)

    p = sub.add_parser("generate", help="write an instance JSON file")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    return parser


def _grid(expr: str) -> list[float]:
    try:
        start, stop, count = expr.split(":")
        start, stop, count = float(start), float(stop), int(count)
        if count < 2:
            return [start]
        return [start + (stop - start) * i / (count - 1) for i in range(count)]
    except ValueError as exc:
        raise InputError(f"bad grid {expr!r}; expected start:stop:count") from exc


def _cmd_estimate(args, argv) -> int:
    seed = _resolve_seed(args.seed)
    spec = parse_scheme(args.scheme)
    instance = parse_instance(args.instance)
    t0 = time.time()
    report = estimate_balancedness(spec, instance, args.trials, RngStream(seed),
                                   jobs=args.jobs)
    wall = time.time() - t0
    meta = {
        "command": argv,
        "scheme": args.scheme,
        "instance": describe_instance(instance),
        "seed": seed,
        "trials": args.trials,
        "wall_time": wall,
    }
    print(f"{args.scheme} on {args.instance}: min ratio {report.minimum:.6f} "
          f"at edge {report.min_edge} ({args.trials} trials)")
    if args.out:
        _write_records(args.out, _report_records(report, meta))
    if args.csv:
        rows = [
            (e, f"{float(report.ratios[i]):.8f}",
             f"{float(report.ci_half_widths[i]):.8f}")
            for i, e in enumerate(report.edges)
        ]
        _write_csv(args.csv, ["edge", "mean", "ci99"], rows)
    if args.plot:
        from .plots import save_balancedness_figure

        save_balancedness_figure(report, args.plot)
    return 0


def _cmd_verify(args, argv) -> int:
    seed = _resolve_seed(args.seed)
    if args.graph:
        g, x, _ = load_instance(args.graph)
        instances = [NamedInstance(os.path.basename(args.graph), g, x)]
    else:
        instances = builtin_battery(args.max_edges)
    rows = run_battery(instances, RngStream(seed), trials=args.trials,
                       max_edges=args.max_edges, schemes=args.scheme)
    failed = [r for r in rows if not r["passed"]]
    out = args.out or "verify.csv"
    _write_csv(
        out,
        ["check", "instance", "scheme", "passed", "detail"],
        [(r["check"], r["instance"], r["scheme"], "pass" if r["passed"] else "FAIL",
          r["detail"]) for r in rows],
    )
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed -> {out}")
    for r in failed:
        print(f"FAIL {r['check']} {r['instance']} {r['scheme']}: {r['detail']}")
    if args.plot:
        from .plots import save_verify_figure

        save_verify_figure(rows, args.plot)
    return 1 if failed else 0


def _cmd_constant(args, argv, name: str) -> int:
    fn = bipartite_constant if name == "beta" else general_constant
    records = []
    if args.grid:
        bs = _grid(args.grid)
    else:
        bs = [args.b]
    for b in bs:
        val = fn(b)
        rec = {"command": argv, "b": b, name: val}
        if name == "gamma":
            rec["series"] = general_constant_series(b)
        records.append(rec)
        print(f"{name}({b:g}) = {val:.10f}")
    if args.out:
        _write_records(args.out, records)
    if args.plot:
        from .plots import save_curve_figure

        save_curve_figure(bs, {name: [r[name] for r in records]}, args.plot,
                          "balancedness")
    return 0


def _cmd_limit(args, argv) -> int:
    seed = _resolve_seed(args.seed)
    t0 = time.time()
    val = optimality_limit(args.n, args.b, args.trials, RngStream(seed))
    wall = time.time() - t0
    asym = bipartite_constant(args.b)
    print(f"limit(n={args.n}, b={args.b:g}) = {val:.6f} "
          f"(asymptote {asym:.6f}, {args.trials} trials)")
    if args.out:
        _write_records(args.out, [{
            "command": argv, "n": args.n, "b": args.b, "value": val,
            "asymptote": asym, "trials": args.trials, "seed": seed,
            "wall_time": wall,
        }])
    if args.plot:
        from .plots import save_limit_figure

        ns = sorted({n for n in (2, 4, 8, 16, 64, 256, args.n) if n <= args.n})
        vals = [
            optimality_limit(n, args.b, min(args.trials, 200000), RngStream(seed, n))
            if n > 12 else optimality_limit(n, args.b)
            for n in ns
        ]
        save_limit_figure(ns, vals, asym, args.plot)
    return 0


def _cmd_decompose(args, argv) -> int:
    g, _, _ = load_instance(args.graph)
    with open(args.marginals) as fh:
        data = json.load(fh)
    try:
        raw = data["values"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"marginal file needs a 'values' list: {exc}") from exc
    y = tuple(Fraction(v) if isinstance(v, str) else v for v in raw)
    combo = birkhoff_decompose(g, y)
    rows = [
        (str(w), ",".join(str(e) for e in sorted(m)))
        for w, m in combo.terms
    ]
    _write_csv(args.out, ["weight", "edges"], rows)
    print(f"decomposed into {len(combo.terms)} matchings -> {args.out}")
    return 0


def _cmd_pipeline(args, argv) -> int:
    seed = _resolve_seed(args.seed)
    spec = parse_scheme(args.scheme)
    g, _ = generate_instance(parse_instance(args.instance))
    f = synthetic_oracle(args.function, g, seed)
    stream = RngStream(seed, 901)
    t0 = time.time()
    x = continuous_greedy(f, g, args.b, args.steps, args.samples, stream.derive(0))
    ml = multilinear_estimate(f, x, max(args.trials, 1000), stream.derive(1))
    mean, stderr = round_and_evaluate(f, g, x, spec, args.trials, stream.derive(2))
    wall = time.time() - t0
    bound = scheme_balancedness_bound(spec, args.b)
    result = {
        "command": argv,
        "function": args.function,
        "scheme": args.scheme,
        "instance": args.instance,
        "b": args.b,
        "steps": args.steps,
        "samples": args.samples,
        "trials": args.trials,
        "seed": seed,
        "multilinear_value": ml.value,
        "multilinear_stderr": ml.stderr,
        "rounded_mean": mean,
        "rounded_stderr": stderr,
        "bound": bound,
        "guarantee": bound * ml.value,
        "wall_time": wall,
    }
    print(f"F(x) ~ {ml.value:.4f}, rounded mean {mean:.4f} "
          f"(guarantee {bound:.4f} x F = {bound * ml.value:.4f})")
    if args.out:
        _write_records(args.out, [result])
    if args.plot:
        from .plots import save_pipeline_figure

        save_pipeline_figure(result, args.plot)
    return 0


def _cmd_generate(args, argv) -> int:
    instance = parse_instance(args.instance)
    g, x = generate_instance(instance)
    coloring = two_coloring(g)
    bipartition = (
        [v for v in range(g.vertex_count) if coloring[v] == 0]
        if coloring is not None else None
    )
    dump_instance(args.out, g, x, bipartition)
    print(f"wrote {describe_instance(instance)} "
          f"({g.vertex_count} vertices, {g.edge_count} edges) -> {args.out}")
    return 0


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "estimate":
        return _cmd_estimate(args, argv)
    if args.command == "verify":
        return _cmd_verify(args, argv)
    if args.command == "beta":
        return _cmd_constant(args, argv, "beta")
    if args.command == "gamma":
        return _cmd_constant(args, argv, "gamma")
    if args.command == "limit":
        return _cmd_limit(args, argv)
    if args.command == "decompose":
        return _cmd_decompose(args, argv)
    if args.command == "pipeline":
        return _cmd_pipeline(args, argv)
    if args.command == "generate":
        return _cmd_generate(args, argv)
    raise InputError(f"unknown subcommand {args.command!r}")


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return dispatch(argv)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
