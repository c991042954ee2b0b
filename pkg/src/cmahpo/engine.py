"""Generation-synchronous evaluation and the optimizer loop.

One control thread owns the optimizer. Each generation is fanned out to at
most ``parallel`` concurrent evaluations and joined before the next ask,
so results never depend on worker count or completion order.

Each evaluation gets ``budget + grace`` seconds of wall time. External
evaluators kill their process at ``budget`` and report a timeout themselves;
the grace period covers that. In-process evaluators cannot be interrupted:
one still running at the deadline is recorded as a timeout and its
eventual result is discarded.
"""
from __future__ import annotations

import logging
import math
import os
import queue
import signal
import subprocess
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import IO, Sequence

import numpy as np

from . import cma
from .cma import Candidate
from .protocol import (EvalRequest, EvaluationFailed, EvaluationTimeout, Evaluator,
                       ProtocolError, decode_response)
from .runlog import FORMAT, EvaluationRecord, RunLog, RunLogWriter
from .space import SearchSpace, transform

log = logging.getLogger(__name__)

OPTIMIZERS = ("cma", "random_prior")
DEFAULT_GRACE = 0.5


class ConfigError(ValueError):
    pass


class GenerationCollapse(RuntimeError):
    """Every evaluation of a generation failed; nothing to rank."""


@dataclass(frozen=True)
class FailurePolicy:
    """How failed/timed-out evaluations are scored before ranking.

    ``worst``: worst ok objective of the generation plus 10% of the ok
    spread (plus 1.0 when the spread is zero). ``fixed``: a constant.
    """

    kind: str = "worst"
    value: float | None = None

    def __post_init__(self):
        if self.kind == "worst":
            if self.value is not None:
                raise ConfigError("the worst policy takes no value")
        elif self.kind == "fixed":
            if self.value is None or not math.isfinite(self.value):
                raise ConfigError("fixed penalty needs a finite value")
        else:
            raise ConfigError(f"unknown failure policy {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "FailurePolicy":
        if text == "worst":
            return cls()
        kind, sep, val = text.partition(":")
        if kind == "fixed" and sep:
            try:
                return cls("fixed", float(val))
            except ValueError:
                pass
        raise ConfigError(f"bad penalty {text!r}; expected 'worst' or 'fixed:VALUE'")

    def __str__(self):
        return "worst" if self.kind == "worst" else f"fixed:{self.value!r}"


@dataclass(frozen=True)
class RunConfig:
    lam: int = 30
    parallel: int = 1
    max_evaluations: int = 300
    time_budget: float | None = None
    seed: int = 0
    failure_policy: FailurePolicy = field(default_factory=FailurePolicy)
    optimizer: str = "cma"
    initial_mean: float = 0.5
    initial_sigma: float = 0.2
    grace_seconds: float = DEFAULT_GRACE

    def validate(self) -> None:
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.parallel < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.lam < (2 if self.optimizer == "cma" else 1):
            raise ConfigError(f"population size {self.lam} too small for {self.optimizer}")
        if self.max_evaluations < self.lam:
            raise ConfigError("max_evaluations must be at least the population size")
        if self.time_budget is not None and not self.time_budget > 0:
            raise ConfigError("time budget must be positive")
        if not 0 <= self.initial_mean <= 1 or not self.initial_sigma > 0:
            raise ConfigError("initial mean must lie in [0, 1] and sigma be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["failure_policy"] = str(self.failure_policy)
        return d


def _run_one(evaluator: Evaluator, request: EvalRequest) -> tuple[str, float | None]:
    try:
        value = float(evaluator(request))
    except EvaluationTimeout:
        return "timeout", None
    except Exception as exc:  # any evaluator error is a failed evaluation, not an abort
        log.info("candidate %d failed: %s", request.candidate_id, exc)
        return "failed", None
    if not math.isfinite(value):
        log.info("candidate %d returned non-finite objective %r", request.candidate_id, value)
        return "failed", None
    return "ok", value


def _record(cand: Candidate, phenotype, status, value, wall, slot) -> EvaluationRecord:
    return EvaluationRecord(
        candidate_id=cand.id, generation=cand.generation, gen_index=cand.gen_index,
        genotype=[float(v) for v in cand.genotype], phenotype=phenotype,
        objective=value, status=status, wall_seconds=wall, worker_slot=slot,
        candidate=cand,
    )


def dispatch_generation(candidates: Sequence[Candidate], space: SearchSpace,
                        evaluator: Evaluator, parallel: int = 1,
                        budget_s: float | None = None, run_id: str = "",
                        grace_s: float = DEFAULT_GRACE) -> list[EvaluationRecord]:
    """Evaluate one generation; records come back ordered by ``gen_index``."""
    if parallel < 1:
        raise ConfigError("parallelism must be >= 1")
    if not candidates:
        raise ConfigError("no candidates to evaluate")
    jobs = []
    for cand in candidates:
        phenotype = transform(space, cand.genotype)
        req = EvalRequest(run_id=run_id, candidate_id=cand.id, generation=cand.generation,
                          budget_seconds=budget_s, params=phenotype,
                          genotype=tuple(float(v) for v in cand.genotype))
        jobs.append((cand, phenotype, req))

    if parallel == 1 and budget_s is None:
        out = []
        for cand, phenotype, req in jobs:
            t0 = time.monotonic()
            status, value = _run_one(evaluator, req)
            out.append(_record(cand, phenotype, status, value, time.monotonic() - t0, 0))
        return sorted(out, key=lambda r: r.gen_index)

    limit = None if budget_s is None else budget_s + grace_s
    done: queue.Queue = queue.Queue()

    def work(key, req, t0):
        status, value = _run_one(evaluator, req)
        done.put((key, status, value, time.monotonic() - t0))

    waiting = deque(jobs)
    free_slots = list(range(parallel - 1, -1, -1))
    running: dict[int, tuple] = {}
    records: dict[int, EvaluationRecord] = {}
    while waiting or running:
        while waiting and free_slots:
            cand, phenotype, req = waiting.popleft()
            slot = free_slots.pop()
            t0 = time.monotonic()
            running[cand.gen_index] = (cand, phenotype, slot, t0)
            threading.Thread(target=work, args=(cand.gen_index, req, t0), daemon=True,
                             name=f"eval-{cand.id}").start()
        timeout = None
        if limit is not None:
            first_deadline = min(t0 + limit for (_, _, _, t0) in running.values())
            timeout = max(0.0, first_deadline - time.monotonic())
        try:
            key, status, value, wall = done.get(timeout=timeout)
        except queue.Empty:
            now = time.monotonic()
            for key, (cand, phenotype, slot, t0) in list(running.items()):
                if now - t0 >= limit:
                    log.info("candidate %d exceeded %.3gs, abandoning", cand.id, limit)
                    records[key] = _record(cand, phenotype, "timeout", None, limit, slot)
                    del running[key]
                    free_slots.append(slot)
            continue
        if key not in running:
            continue
        cand, phenotype, slot, _ = running.pop(key)
        if limit is not None and wall > limit:
            status, value, wall = "timeout", None, limit
        records[key] = _record(cand, phenotype, status, value, wall, slot)
        free_slots.append(slot)
    return [records[k] for k in sorted(records)]


def resolve_failures(records: Sequence[EvaluationRecord],
                     policy: FailurePolicy = FailurePolicy()) -> list[tuple[Candidate, float]]:
    ok = [r.objective for r in records if r.status == "ok"]
    if not ok:
        raise GenerationCollapse(
            f"generation collapse: all {len(records)} evaluations failed or timed out")
    if policy.kind == "fixed":
        penalty = policy.value
    else:
        spread = max(ok) - min(ok)
        penalty = max(ok) + (0.1 * spread if spread > 0 else 1.0)
    out = []
    for r in records:
        if r.candidate is None:
            raise ValueError(f"record {r.candidate_id} carries no candidate")
        out.append((r.candidate, r.objective if r.status == "ok" else penalty))
    return out


def make_header(config: RunConfig, space: SearchSpace, evaluator_name: str) -> dict:
    return {
        "type": "header",
        "format": FORMAT,
        "run_id": f"{config.optimizer}-{config.seed}",
        "config": config.to_dict(),
        "space": space.to_records(),
        "evaluator": evaluator_name,
    }


def run_optimization(config: RunConfig, space: SearchSpace, evaluator: Evaluator,
                     log_sink: IO[str] | None = None, evaluator_name: str = "") -> RunLog:
    """ask -> dispatch -> resolve -> tell until the evaluation budget is spent."""
    config.validate()
    header = make_header(config, space, evaluator_name or getattr(evaluator, "__name__", ""))
    run_id = header["run_id"]
    writer = RunLogWriter(log_sink) if log_sink is not None else None
    if writer:
        writer.write_header(header)
    runlog = RunLog(header=header)

    d = space.dim_count
    if config.optimizer == "cma":
        state = cma.init_cma(d, config.lam, np.full(d, config.initial_mean),
                             config.initial_sigma, config.seed)
        next_batch = lambda: cma.ask(state)  # noqa: E731
    else:
        sampler = cma.PriorSampler(d, config.seed, config.initial_mean, config.initial_sigma)
        next_batch = lambda: sampler.ask(config.lam)  # noqa: E731

    evaluated = 0
    while evaluated < config.max_evaluations:
        candidates = next_batch()
        records = dispatch_generation(candidates, space, evaluator, config.parallel,
                                      config.time_budget, run_id, config.grace_seconds)
        runlog.records.extend(records)
        if writer:
            writer.write_records(records)
        evaluated += len(records)
        ranked = resolve_failures(records, config.failure_policy)
        if config.optimizer == "cma":
            cma.tell(state, ranked)
        best = runlog.best
        log.debug("generation %d done, %d evaluations, best %r",
                  candidates[0].generation, evaluated, best and best.objective)
    return runlog


class ExternalEvaluator:
    """Runs ``argv`` once per evaluation and speaks the line protocol with it."""

    def __init__(self, argv: Sequence[str]):
        if not argv:
            raise ConfigError("empty evaluator command")
        self.argv = list(argv)

    @property
    def __name__(self) -> str:
        return " ".join(self.argv)

    def __call__(self, request: EvalRequest) -> float:
        try:
            proc = subprocess.Popen(self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                    stderr=subprocess.PIPE, text=True, start_new_session=True)
        except OSError as exc:
            raise EvaluationFailed(f"could not start evaluator: {exc}") from None
        try:
            out, err = proc.communicate(request.to_line(), timeout=request.budget_seconds)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            raise EvaluationTimeout(f"killed after {request.budget_seconds}s") from None
        if proc.returncode != 0:
            raise EvaluationFailed(f"evaluator exited with {proc.returncode}: {err.strip()[-500:]}")
        lines = [ln for ln in out.splitlines() if ln.strip()]
        if not lines:
            raise ProtocolError("evaluator wrote no response")
        return decode_response(lines[0])


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()
    proc.communicate()


def external_evaluator(command: Sequence[str]) -> ExternalEvaluator:
    return ExternalEvaluator(command)
