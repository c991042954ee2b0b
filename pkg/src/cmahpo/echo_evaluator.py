"""Builtin benchmark behind the external-evaluator line protocol.

Reads one request line from stdin, answers with one response line and
exits. Meant for end-to-end tests of the subprocess path::

    cmahpo-echo surrogate_dnn --dim 19 --seed 7 --fail-rate 0.1

The ``--hang-ids``/``--crash-ids``/``--nan-ids``/``--garbage-ids`` options
make chosen candidate ids sleep past their budget, exit non-zero, answer
NaN, or answer with something that is not JSON.
"""
from __future__ import annotations

import argparse
import sys
import time

from .benchmarks import Benchmark, BenchmarkSpec
from .protocol import EvalRequest, EvaluationFailed, encode_response


def _ids(text: str) -> frozenset[int]:
    return frozenset(int(t) for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmahpo-echo", description=__doc__.splitlines()[0])
    p.add_argument("benchmark")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--fail-rate", type=float, default=0.0)
    p.add_argument("--hang-ids", type=_ids, default=frozenset())
    p.add_argument("--hang-seconds", type=float, default=30.0)
    p.add_argument("--crash-ids", type=_ids, default=frozenset())
    p.add_argument("--nan-ids", type=_ids, default=frozenset())
    p.add_argument("--garbage-ids", type=_ids, default=frozenset())
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    bench = Benchmark(BenchmarkSpec(args.benchmark, args.dim, args.noise, None, args.fail_rate),
                      args.seed)
    request = EvalRequest.from_line(sys.stdin.readline())
    cid = request.candidate_id
    if cid in args.crash_ids:
        print("injected crash", file=sys.stderr)
        return 1
    if cid in args.hang_ids:
        time.sleep(args.hang_seconds)
    if cid in args.garbage_ids:
        sys.stdout.write("this is not json\n")
        return 0
    if cid in args.nan_ids:
        sys.stdout.write('{"objective": NaN}\n')
        return 0
    try:
        value = bench(request)
    except EvaluationFailed as exc:
        sys.stdout.write(encode_response(error=str(exc)))
    else:
        sys.stdout.write(encode_response(value))
    return 0


if __name__ == "__main__":
    sys.exit(main())
