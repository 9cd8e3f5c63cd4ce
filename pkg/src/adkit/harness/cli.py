"""Command line entry point: ``adkit bench``, ``adkit check``, ``adkit pattern``.

Exit codes: 0 success, 1 a correctness failure, 2 a configuration error.
"""

from __future__ import annotations

import argparse
import sys


from adkit.errors import ADError, ConfigError
from adkit.harness import runner
from adkit.harness import scenarios as sc
from adkit.sparse import detect_hessian_pattern, detect_jacobian_pattern, greedy_color

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_JACOBIAN_LIKE = ("pushforward", "pullback", "derivative", "jacobian")


def _names(s):
    return [t for t in (p.strip() for p in s.split(",")) if t]


def _sizes(s):
    try:
        return [int(t) for t in _names(s)]
    except ValueError:
        raise ConfigError(f"bad size list '{s}'") from None


def _prepared(s):
    return {"both": (True, False), "true": (True,), "false": (False,)}[s]


def _parser():
    p = argparse.ArgumentParser(prog="adkit", description="Check and benchmark AD backends.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(q):
        q.add_argument("--scenarios", default="all", help="comma list of scenario names, or 'all'")
        q.add_argument("--backends", default="dual,tape,fd", help="comma list of backend ids")
        q.add_argument("--sizes", default=None, help="comma list of input sizes")
        q.add_argument("--scenario-module", action="append", default=[],
                       help="python file registering extra scenarios (repeatable)")
        q.add_argument("--tol", type=float, default=None, help="absolute tolerance override")
        q.add_argument("--jobs", type=int, default=1, help="parallel cells")

    b = sub.add_parser("bench", help="time operators and write a CSV report")
    common(b)
    b.add_argument("--prepared", choices=("both", "true", "false"), default="both")
    b.add_argument("--out", required=True, help="CSV output path")
    b.add_argument("--markdown", default=None, help="also write a markdown table here")
    b.add_argument("--samples", type=int, default=100)
    b.add_argument("--budget-ms", type=float, default=1000.0)
    b.add_argument("--parallel-timing", action="store_true",
                   help="let --jobs apply to timing cells too")

    c = sub.add_parser("check", help="check derivatives against references")
    common(c)

    t = sub.add_parser("pattern", help="write a scenario's detected sparsity pattern")
    t.add_argument("--scenario", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--size", type=int, default=None)
    t.add_argument("--coloring", default=None, help="also write the greedy coloring here")
    t.add_argument("--scenario-module", action="append", default=[])
    return p


def _pattern(args):
    s = sc.get(args.scenario)
    case = s.instance(args.size)
    if s.operator in _JACOBIAN_LIKE:
        pat = detect_jacobian_pattern(case.f, case.x, *case.contexts)
        partition = "column"
    else:
        pat = detect_hessian_pattern(case.f, case.x, *case.contexts)
        partition = "symmetric"
    pat.save(args.out)
    print(f"{s.name}: {pat.nrows}x{pat.ncols} pattern, {pat.nnz} nonzeros -> {args.out}")
    if args.coloring:
        col = greedy_color(pat, partition)
        with open(args.coloring, "w") as fh:
            fh.write(col.to_text())
        print(f"{partition} coloring: {col.ncolors} colors -> {args.coloring}")
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        for path in args.scenario_module:
            sc.load_module(path)
        if args.command == "pattern":
            return _pattern(args)
        cfg = runner.SuiteConfig(
            scenarios=_names(args.scenarios), backends=_names(args.backends),
            sizes=_sizes(args.sizes) if args.sizes is not None else None,
            tolerance=args.tol, jobs=args.jobs, mode=args.command)
        if args.command == "bench":
            cfg.prepared = _prepared(args.prepared)
            cfg.out, cfg.markdown = args.out, args.markdown
            cfg.samples, cfg.budget_ms = args.samples, args.budget_ms
            cfg.parallel_timing = args.parallel_timing
        records, status = runner.run_suite(cfg)
    except ConfigError as e:
        print(f"adkit: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ADError as e:
        print(f"adkit: {e}", file=sys.stderr)
        return EXIT_FAIL
    if args.command == "check":
        for r in records:
            print(r.line())
    else:
        print(runner.markdown_table(records), end="")
        print(f"wrote {len(records)} rows to {args.out}")
    n_fail = sum(r.status == "fail" for r in records)
    if n_fail:
        print(f"{n_fail} failing cell(s)", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
