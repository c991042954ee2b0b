"""``cmahpo`` command line: run, report, bench, spaces.

Exit codes: 0 success, 1 I/O failure or failed bench check, 2 configuration
error, 3 generation collapse.
"""
from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from . import bench as bench_mod
from .benchmarks import Benchmark, BenchmarkError, BenchmarkSpec
from .engine import (ConfigError, ExternalEvaluator, FailurePolicy, GenerationCollapse,
                     RunConfig, run_optimization)
from .kde import KdeError
from .report import (ReportError, best_so_far, density_report, error_density,
                     write_density_report, write_error_density, write_trajectory)
from .runlog import RunLogError, read_run_log
from .space import BUILTIN_TAGS, SpaceError, builtin_space, dump_space, load_space, resolve_space

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_COLLAPSE = 3


def _err(msg: str) -> None:
    print(f"cmahpo: {msg}", file=sys.stderr)


def parse_builtin_evaluator(ref: str, dim: int, seed: int) -> Benchmark:
    """``builtin:NAME`` or ``builtin:NAME:noise=0.05,fail_rate=0.1``."""
    _, _, rest = ref.partition(":")
    name, _, opts = rest.partition(":")
    kw = {}
    for item in filter(None, opts.split(",")):
        key, sep, val = item.partition("=")
        if not sep or key not in ("noise", "fail_rate"):
            raise ConfigError(f"bad builtin evaluator option {item!r}")
        try:
            kw[key] = float(val)
        except ValueError:
            raise ConfigError(f"bad builtin evaluator option {item!r}") from None
    spec = BenchmarkSpec(name, dim, noise_sigma=kw.get("noise"), fail_rate=kw.get("fail_rate", 0.0))
    return Benchmark(spec, seed)


def build_evaluator(tokens: list[str], dim: int, seed: int):
    if len(tokens) == 1 and tokens[0].startswith("builtin:"):
        bench = parse_builtin_evaluator(tokens[0], dim, seed)
        return bench, bench.describe()
    argv = shlex.split(tokens[0]) if len(tokens) == 1 else tokens
    return ExternalEvaluator(argv), shlex.join(argv)


def cmd_run(args) -> int:
    try:
        space = resolve_space(args.space)
        config = RunConfig(
            lam=args.lam,
            parallel=args.parallel,
            max_evaluations=args.max_evals,
            time_budget=args.eval_budget_s,
            seed=args.seed,
            failure_policy=FailurePolicy.parse(args.penalty),
            optimizer="random_prior" if args.optimizer == "random" else args.optimizer,
        )
        config.validate()
        evaluator, name = build_evaluator(args.evaluator, space.dim_count, args.seed)
    except (ConfigError, SpaceError, BenchmarkError) as exc:
        _err(f"configuration error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"cannot read space: {exc}")
        return EXIT_IO

    try:
        out = open(args.out, "w", encoding="utf-8")
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return EXIT_IO
    try:
        with out:
            runlog = run_optimization(config, space, evaluator, out, name)
    except GenerationCollapse as exc:
        _err(str(exc))
        return EXIT_COLLAPSE
    except OSError as exc:
        _err(f"I/O failure: {exc}")
        return EXIT_IO

    best = runlog.best
    print(f"evaluations: {len(runlog.records)}")
    if best is None:
        print("best objective: none (no successful evaluation)")
    else:
        print(f"best objective: {best.objective!r} (candidate {best.candidate_id})")
        print("best phenotype: " + json.dumps(best.phenotype))
    return 0


def cmd_report(args) -> int:
    try:
        logs = [read_run_log(p) for p in args.log]
    except OSError as exc:
        _err(f"cannot read log: {exc}")
        return EXIT_CONFIG
    except RunLogError as exc:
        _err(f"bad log: {exc}")
        return EXIT_CONFIG

    outdir = Path(args.out)
    tag = (lambda log: "") if len(logs) == 1 else (lambda log: Path(log.source).stem + "_")
    # everything is validated before anything is written
    try:
        for log in logs:
            best_so_far(log)
            density_report(log, args.first, args.last, args.mesh)
        error_density(logs, args.error_mesh, args.divergence_threshold)
    except (ReportError, KdeError) as exc:
        _err(str(exc))
        return EXIT_CONFIG

    try:
        outdir.mkdir(parents=True, exist_ok=True)
        for log in logs:
            write_trajectory(log, outdir / f"{tag(log)}trajectory.csv")
            write_density_report(log, outdir / f"{tag(log)}genotype_density.csv",
                                 args.first, args.last, args.mesh)
        results = write_error_density(logs, outdir / "error_density.csv", args.error_mesh,
                                      args.divergence_threshold)
    except OSError as exc:
        _err(f"I/O failure: {exc}")
        return EXIT_IO
    for res in results:
        print(f"{res.source}: divergence fraction {res.divergence_fraction!r}")
    print(f"tables written to {outdir}")
    return 0


def cmd_bench(args) -> int:
    if args.inject_fault:
        with bench_mod.inject_fault(args.inject_fault):
            results = bench_mod.run_suite(args.seed, args.quick)
    else:
        results = bench_mod.run_suite(args.seed, args.quick)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_spaces(args) -> int:
    try:
        if args.show:
            sys.stdout.write(dump_space(builtin_space(args.show)))
            return 0
        if args.check:
            space = load_space(args.check)
            print(f"{args.check}: {space.dim_count} dimensions ok")
            return 0
    except SpaceError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
    for tag in BUILTIN_TAGS:
        space = builtin_space(tag)
        print(f"{tag}: {space.dim_count} dims ({', '.join(space.names)})")
    return 0


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmahpo", description="CMA-ES hyperparameter search")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an optimization and write its log")
    run.add_argument("--space", required=True, help="space file or builtin:TAG")
    run.add_argument("--evaluator", required=True, nargs="+",
                     help="builtin:NAME[:noise=S,fail_rate=P] or an external command")
    run.add_argument("--optimizer", choices=["cma", "random"], default="cma")
    run.add_argument("--lambda", dest="lam", type=int, default=30)
    run.add_argument("--parallel", type=int, default=1)
    run.add_argument("--max-evals", type=int, default=300)
    run.add_argument("--eval-budget-s", type=float, default=None)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--penalty", default="worst", help="worst or fixed:VALUE")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="trajectory and density tables from run logs")
    rep.add_argument("--log", required=True, nargs="+")
    rep.add_argument("--out", required=True)
    rep.add_argument("--first", type=_positive_int, default=30)
    rep.add_argument("--last", type=_positive_int, default=100)
    rep.add_argument("--mesh", type=_positive_int, default=256)
    rep.add_argument("--error-mesh", type=_positive_int, default=5000)
    rep.add_argument("--divergence-threshold", type=float, default=0.7)
    rep.set_defaults(func=cmd_report)

    b = sub.add_parser("bench", help="run the optimizer self-check suite")
    b.add_argument("--quick", action="store_true")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--inject-fault", choices=["weights"], help=argparse.SUPPRESS)
    b.set_defaults(func=cmd_bench)

    sp = sub.add_parser("spaces", help="list, show or check search spaces")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--show", metavar="TAG")
    g.add_argument("--check", metavar="FILE")
    sp.set_defaults(func=cmd_spaces)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
