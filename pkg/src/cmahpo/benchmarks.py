"""Synthetic objectives on the unit cube.

Each benchmark has an optimum location in genotype space (``shift``) and a
known optimal value. Observation noise and simulated failures are drawn
from a generator seeded with ``(seed, candidate_id)``, so an evaluation
gives the same answer no matter which worker runs it or when.

``surrogate_dnn`` is a made-up 19-D stand-in for "validation error after
training": an anisotropic bowl around an off-centre optimum, bounded in
(0.0042, 0.9), multiplied by three shallower decoy wells. Its value is::

    r2   = sum(((x - c) / w) ** 2)
    bowl = r2 / (r2 + K)
    f    = F_MIN + (F_MAX - F_MIN) * bowl * prod_k(1 - d_k * exp(-0.5 * |(x - c_k) / v_k|^2))

The bowl vanishes only at ``c`` and every decoy factor is positive, so the
global minimum is exactly ``F_MIN`` at ``x = c``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .protocol import EvalRequest, EvaluationFailed

NAMES = ("sphere", "rosenbrock", "rastrigin", "noisy_sphere", "surrogate_dnn")
DEFAULT_NOISE = 0.05

SURROGATE_DIM = 19
F_MIN = 0.0042
F_MAX = 0.9
BOWL_K = 20.0
SURROGATE_OPTIMUM = np.array([
    0.31, 0.62, 0.18, 0.27, 0.55, 0.83, 0.40, 0.22, 0.74, 0.35,
    0.66, 0.71, 0.79, 0.28, 0.47, 0.58, 0.12, 0.86, 0.44,
])
SURROGATE_WIDTHS = np.array([
    0.80, 0.60, 0.25, 0.50, 0.70, 0.20, 0.45, 0.55, 0.30, 0.65,
    0.35, 0.25, 0.30, 0.40, 0.60, 0.50, 0.45, 0.25, 0.70,
])
# (centre, width, depth) of each decoy well
SURROGATE_WELLS = (
    (np.full(19, 0.5), 0.12, 0.5),
    (np.array([0.15 if i % 2 == 0 else 0.85 for i in range(19)]), 0.10, 0.6),
    (np.array([0.25 + 0.5 * ((7 * i) % 19) / 18 for i in range(19)]), 0.15, 0.4),
)

ROSENBROCK_OPTIMUM = 0.744140625  # maps to z = 1 on [-2.048, 2.048]


class BenchmarkError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    dim: int
    noise_sigma: float | None = None
    shift: tuple[float, ...] | None = None
    fail_rate: float = 0.0

    def __post_init__(self):
        if self.name not in NAMES:
            raise BenchmarkError(f"unknown benchmark {self.name!r}; choose from {', '.join(NAMES)}")
        if self.dim < 1:
            raise BenchmarkError("dim must be >= 1")
        if self.name == "surrogate_dnn" and self.dim != SURROGATE_DIM:
            raise BenchmarkError(f"surrogate_dnn is {SURROGATE_DIM}-dimensional, got dim={self.dim}")
        if self.noise_sigma is not None and not self.noise_sigma >= 0:
            raise BenchmarkError("noise_sigma must be >= 0")
        if not 0 <= self.fail_rate < 1:
            raise BenchmarkError("fail_rate must lie in [0, 1)")
        if self.shift is not None and len(self.shift) != self.dim:
            raise BenchmarkError("shift length differs from dim")

    @property
    def noise(self) -> float:
        if self.noise_sigma is not None:
            return self.noise_sigma
        return DEFAULT_NOISE if self.name == "noisy_sphere" else 0.0


def _sphere(u):
    return float(u @ u)


def _rosenbrock(u):
    z = -2.048 + 4.096 * u
    return float(np.sum(100.0 * (z[1:] - z[:-1] ** 2) ** 2 + (1.0 - z[:-1]) ** 2))


def _rastrigin(u):
    z = 10.24 * (u - 0.5)
    return float(10.0 * len(z) + np.sum(z**2 - 10.0 * np.cos(2 * math.pi * z)))


def _surrogate(u):
    r2 = float(np.sum(((u - SURROGATE_OPTIMUM) / SURROGATE_WIDTHS) ** 2))
    q = r2 / (r2 + BOWL_K)
    for centre, width, depth in SURROGATE_WELLS:
        q *= 1.0 - depth * math.exp(-0.5 * float(np.sum(((u - centre) / width) ** 2)))
    return F_MIN + (F_MAX - F_MIN) * q


# name -> (function of u, where the function's own minimum sits, default optimum, optimal value);
# a benchmark evaluates fn(x - optimum + origin)
_BASE = {
    "sphere": (_sphere, lambda d: np.zeros(d), lambda d: np.full(d, 0.5), 0.0),
    "noisy_sphere": (_sphere, lambda d: np.zeros(d), lambda d: np.full(d, 0.5), 0.0),
    "rosenbrock": (_rosenbrock, lambda d: np.full(d, ROSENBROCK_OPTIMUM),
                   lambda d: np.full(d, ROSENBROCK_OPTIMUM), 0.0),
    "rastrigin": (_rastrigin, lambda d: np.full(d, 0.5), lambda d: np.full(d, 0.5), 0.0),
    "surrogate_dnn": (_surrogate, lambda d: SURROGATE_OPTIMUM.copy(),
                      lambda d: SURROGATE_OPTIMUM.copy(), F_MIN),
}


class Benchmark:
    """Callable evaluator for one :class:`BenchmarkSpec`."""

    def __init__(self, spec: BenchmarkSpec, seed: int = 0):
        self.spec = spec
        self.seed = int(seed)
        self._fn, origin, default_opt, self.optimal_value = _BASE[spec.name]
        self.optimum = (np.array(spec.shift, dtype=float) if spec.shift is not None
                        else default_opt(spec.dim))
        self._origin = origin(spec.dim)
        self._centred = not self._origin.any()

    def value(self, genotype: Sequence[float]) -> float:
        """Noise-free objective."""
        x = np.asarray(genotype, dtype=float)
        if x.shape != (self.spec.dim,):
            raise BenchmarkError(f"expected {self.spec.dim} coordinates, got {x.shape}")
        u = x - self.optimum
        return self._fn(u if self._centred else u + self._origin)

    def observe(self, genotype: Sequence[float], candidate_id: int) -> float:
        rng = np.random.default_rng([self.seed, int(candidate_id)])
        fail_draw = rng.random()
        noise_draw = rng.standard_normal()
        if fail_draw < self.spec.fail_rate:
            raise EvaluationFailed("simulated divergence")
        return self.value(genotype) + self.spec.noise * noise_draw

    def __call__(self, request: EvalRequest) -> float:
        return self.observe(request.genotype, request.candidate_id)

    def describe(self) -> str:
        s = self.spec
        return f"builtin:{s.name}(dim={s.dim},noise={s.noise!r},fail_rate={s.fail_rate!r},seed={self.seed})"


def make_benchmark(spec: BenchmarkSpec, seed: int = 0) -> Benchmark:
    return Benchmark(spec, seed)


class FaultInjector:
    """Wraps an evaluator and misbehaves on chosen candidate ids.

    ``hang_ids`` sleep for ``hang_seconds`` before answering (the engine's
    budget should cut them off), ``crash_ids`` raise, ``nan_ids`` return NaN.
    """

    def __init__(self, inner, hang_ids=(), crash_ids=(), nan_ids=(), hang_seconds: float = 5.0):
        self.inner = inner
        self.hang_ids = frozenset(hang_ids)
        self.crash_ids = frozenset(crash_ids)
        self.nan_ids = frozenset(nan_ids)
        self.hang_seconds = hang_seconds

    def __call__(self, request: EvalRequest) -> float:
        cid = request.candidate_id
        if cid in self.crash_ids:
            raise EvaluationFailed("injected crash")
        if cid in self.nan_ids:
            return float("nan")
        if cid in self.hang_ids:
            time.sleep(self.hang_seconds)
        return self.inner(request)
