"""Self-check suite behind ``cmahpo bench``.

Each check returns a :class:`CheckResult`; metrics are printed without
timings so two runs with the same seed print identical text.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import cma
from .benchmarks import Benchmark, BenchmarkSpec
from .engine import RunConfig, run_optimization
from .runlog import strip_timing
from .space import builtin_space


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def minimize(fn: Callable[[np.ndarray], float], dim: int, lam: int, max_evals: int,
             seed: int, transform: Callable[[float], float] = lambda v: v, record: bool = True):
    """Plain ask/tell loop; returns (best raw objective, candidate trace, state snapshots).

    With ``record=False`` the trace and snapshot lists stay empty.
    """
    state = cma.init_cma(dim, lam, seed=seed)
    best = math.inf
    trace, snaps = [], []
    while state.eval_count < max_evals:
        cands = cma.ask(state)
        raw = [fn(c.genotype) for c in cands]
        best = min(best, min(raw))
        cma.tell(state, [(c, transform(v)) for c, v in zip(cands, raw)])
        if record:
            trace.append(np.array([c.sample for c in cands]).tobytes())
            snaps.append(state.snapshot())
    return best, trace, snaps


def check_strategy_params(seed: int, quick: bool) -> CheckResult:
    try:
        for dim, lam in [(1, 2), (2, 4), (10, 10), (19, 30), (40, 200)]:
            cma.default_strategy_params(dim, lam).check()
    except ValueError as exc:
        return CheckResult("strategy_params", False, str(exc))
    return CheckResult("strategy_params", True, "weights sum to 1, mu_eff consistent")


def check_sphere_convergence(seed: int, quick: bool) -> CheckResult:
    n_seeds = 5 if quick else 20
    shift = np.linspace(0.3, 0.7, 10)
    bench = Benchmark(BenchmarkSpec("sphere", 10, shift=tuple(shift)))
    bests = [minimize(bench.value, 10, 10, 5000, seed + k, record=False)[0] for k in range(n_seeds)]
    hits = sum(b < 1e-10 for b in bests)
    need = math.ceil(0.95 * n_seeds)
    return CheckResult("sphere_convergence", hits >= need,
                       f"{hits}/{n_seeds} seeds below 1e-10 (need {need}), worst {max(bests):.3e}")


def check_rastrigin(seed: int, quick: bool) -> CheckResult:
    n_seeds = 3 if quick else 10
    bench = Benchmark(BenchmarkSpec("rastrigin", 5))
    bests = [minimize(bench.value, 5, 100, 20000, seed + k, record=False)[0] for k in range(n_seeds)]
    randoms = [min(bench.value(c.genotype) for c in cma.sample_prior(5, 20000, seed + k))
               for k in range(n_seeds)]
    hits = sum(b < 1e-8 for b in bests)
    ok = hits >= 1 and np.median(bests) < np.median(randoms)
    return CheckResult("rastrigin", ok,
                       f"{hits}/{n_seeds} seeds at global optimum, median best {np.median(bests):.4g} "
                       f"vs random {np.median(randoms):.4g}")


def check_monotone_invariance(seed: int, quick: bool) -> CheckResult:
    gens = 30 if quick else 100
    bench = Benchmark(BenchmarkSpec("rosenbrock", 5))
    _, trace_f, _ = minimize(bench.value, 5, 8, gens * 8, seed)
    _, trace_g, _ = minimize(bench.value, 5, 8, gens * 8, seed, transform=math.log1p)
    same = trace_f == trace_g
    return CheckResult("monotone_invariance", same,
                       f"f vs log(1+f), {gens} generations, candidates {'identical' if same else 'differ'}")


def check_scale_invariance(seed: int, quick: bool) -> CheckResult:
    gens = 30 if quick else 100
    bench = Benchmark(BenchmarkSpec("rosenbrock", 5))
    _, _, snaps_f = minimize(bench.value, 5, 8, gens * 8, seed)
    _, _, snaps_g = minimize(bench.value, 5, 8, gens * 8, seed, transform=lambda v: 1000.0 * v)
    same = snaps_f == snaps_g
    return CheckResult("scale_invariance", same,
                       f"f vs 1000*f, {gens} generations, states {'identical' if same else 'differ'}")


def check_gen0_equals_prior(seed: int, quick: bool) -> CheckResult:
    state = cma.init_cma(19, 30, seed=seed)
    a = np.array([c.sample for c in cma.ask(state)])
    b = np.array([c.sample for c in cma.sample_prior(19, 30, seed)])
    same = a.tobytes() == b.tobytes()
    return CheckResult("gen0_equals_prior", same,
                       f"30 x 19 pre-boundary samples {'identical' if same else 'differ'}")


def check_parallel_transparency(seed: int, quick: bool) -> CheckResult:
    space = builtin_space("mnist_adam")
    evals = 60 if quick else 300
    bench = Benchmark(BenchmarkSpec("surrogate_dnn", 19, noise_sigma=0.001, fail_rate=0.05), seed)
    logs = []
    for p in (1, 8):
        cfg = RunConfig(lam=30, parallel=p, max_evaluations=evals, seed=seed)
        logs.append([strip_timing(r) for r in run_optimization(cfg, space, bench).records])
    same = logs[0] == logs[1]
    return CheckResult("parallel_transparency", same,
                       f"surrogate_dnn {evals} evals, P=1 vs P=8 logs {'identical' if same else 'differ'}")


def check_space_round_trip(seed: int, quick: bool) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for tag in ("mnist_adam", "mnist_adadelta"):
        for p in builtin_space(tag).dims:
            if p.integer_round:
                continue
            xs = rng.random(1000)
            worst = max(worst, max(abs(p.inverse(p.continuous(x)) - x) for x in xs))
    return CheckResult("space_round_trip", worst < 1e-9, f"max |inverse(transform(x)) - x| = {worst:.3e}")


CHECKS = (check_strategy_params, check_sphere_convergence, check_rastrigin,
          check_monotone_invariance, check_scale_invariance, check_gen0_equals_prior,
          check_parallel_transparency, check_space_round_trip)


def run_suite(seed: int = 0, quick: bool = False) -> list[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            results.append(check(seed, quick))
        except Exception as exc:  # a crashing check is a failing check
            name = check.__name__.removeprefix("check_")
            results.append(CheckResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return results


@contextlib.contextmanager
def inject_fault(kind: str) -> Iterator[None]:
    """Test hook: deliberately break part of the optimizer."""
    if kind != "weights":
        raise ValueError(f"unknown fault {kind!r}")
    original = cma._normalize_weights
    cma._normalize_weights = lambda raw: 1.5 * raw / raw.sum()
    try:
        yield
    finally:
        cma._normalize_weights = original
