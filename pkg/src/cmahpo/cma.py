"""(mu/mu_w, lambda)-CMA-ES on the unit cube.

The strategy follows the standard formulation with weighted recombination,
cumulative step-size adaptation (CSA) and a combined rank-one / rank-mu
covariance update. All strategy constants use the usual defaults; only the
population size and the initial distribution are chosen by the caller.

Default constants, for dimension ``n`` and ``mu = floor(lambda / 2)``::

    w_i'    = ln(mu + 1/2) - ln(i),  i = 1..mu;  w = w' / sum(w')
    mu_eff  = 1 / sum(w_i^2)
    c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
    d_sigma = 1 + 2 * max(0, sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
    c_c     = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    c_1     = 2 / ((n + 1.3)^2 + mu_eff)
    c_mu    = min(1 - c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2)^2 + mu_eff))
    chi_n   = sqrt(n) * (1 - 1 / (4 n) + 1 / (21 n^2))

Random numbers come from numpy's PCG64 bit generator seeded directly with
the integer seed. A generation draws one ``lambda x d`` block of standard
normals (``Generator.standard_normal``); rows falling outside the cube are
then redrawn in row order, ``d`` normals per attempt. A run is therefore
reproducible from its seed on any platform numpy supports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_RESAMPLES = 100


class UsageError(RuntimeError):
    """ask/tell called out of order or with mismatched candidates."""


@dataclass(frozen=True)
class StrategyParams:
    lam: int
    mu: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float

    def check(self) -> None:
        """Raise ``ValueError`` if any structural invariant is violated."""
        w = self.weights
        if len(w) != self.mu:
            raise ValueError("weight count differs from mu")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if np.any(w <= 0) or np.any(np.diff(w) > 0):
            raise ValueError("weights must be positive and non-increasing")
        if self.mu_eff != 1.0 / np.sum(w**2):
            raise ValueError("mu_eff inconsistent with weights")
        if self.c_1 + self.c_mu > 1 + 1e-15:
            raise ValueError("c_1 + c_mu exceeds 1")
        for name in ("c_sigma", "c_c"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} outside (0, 1)")


def _normalize_weights(raw: np.ndarray) -> np.ndarray:
    return raw / raw.sum()


def default_strategy_params(dim: int, lam: int) -> StrategyParams:
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if lam < 2:
        raise ValueError(f"population size must be >= 2, got {lam}")
    n = float(dim)
    mu = lam // 2
    raw = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    weights = _normalize_weights(raw)
    mu_eff = 1.0 / np.sum(weights**2)
    c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
    d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
    c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1 - c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))
    params = StrategyParams(
        lam=lam, mu=mu, weights=weights, mu_eff=float(mu_eff),
        c_sigma=c_sigma, d_sigma=d_sigma, c_c=c_c, c_1=c_1, c_mu=c_mu,
        chi_n=chi_n,
    )
    params.check()
    return params


@dataclass(frozen=True, eq=False)
class Candidate:
    """A point handed out for evaluation.

    ``genotype`` is what gets evaluated and always lies in the unit cube;
    ``sample`` is the underlying draw from the search distribution, which
    only differs from ``genotype`` when the draw had to be clipped.
    """

    genotype: np.ndarray
    gen_index: int
    id: int
    generation: int
    sample: np.ndarray = field(repr=False)


@dataclass(eq=False)
class CmaState:
    dim: int
    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    eig_basis: np.ndarray
    eig_values: np.ndarray  # D**2
    path_sigma: np.ndarray
    path_cov: np.ndarray
    generation: int
    strategy: StrategyParams
    rng: np.random.Generator
    eval_count: int = 0
    eigen_eval: int = 0
    pending: list[Candidate] | None = field(default=None, repr=False)

    @property
    def lam(self) -> int:
        return self.strategy.lam

    def snapshot(self) -> dict:
        """Everything that defines the state, for exact comparisons."""
        return {
            "mean": self.mean.tobytes(),
            "sigma": self.sigma,
            "cov": self.cov.tobytes(),
            "eig_basis": self.eig_basis.tobytes(),
            "eig_values": self.eig_values.tobytes(),
            "path_sigma": self.path_sigma.tobytes(),
            "path_cov": self.path_cov.tobytes(),
            "generation": self.generation,
            "eval_count": self.eval_count,
            "rng": repr(self.rng.bit_generator.state),
        }


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def init_cma(dim: int, lam: int, mean: Sequence[float] | np.ndarray | None = None,
             sigma: float = 0.2, seed: int = 0) -> CmaState:
    """Fresh strategy state; defaults give N(0.5, 0.2^2) per coordinate."""
    strategy = default_strategy_params(dim, lam)
    m = np.full(dim, 0.5) if mean is None else np.array(mean, dtype=float)
    if m.shape != (dim,):
        raise ValueError(f"mean has shape {m.shape}, expected ({dim},)")
    if np.any(m < 0) or np.any(m > 1):
        raise ValueError("initial mean must lie in the unit cube")
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be positive, got {sigma}")
    return CmaState(
        dim=dim,
        mean=m,
        sigma=float(sigma),
        cov=np.eye(dim),
        eig_basis=np.eye(dim),
        eig_values=np.ones(dim),
        path_sigma=np.zeros(dim),
        path_cov=np.zeros(dim),
        generation=0,
        strategy=strategy,
        rng=make_rng(seed),
    )


def _draw_batch(rng: np.random.Generator, mean: np.ndarray, sigma: float,
                basis: np.ndarray, scales: np.ndarray, n: int, first_id: int,
                generation: int) -> list[Candidate]:
    # out-of-cube rows are redrawn in row order, up to MAX_RESAMPLES times, then clipped
    z = rng.standard_normal((n, len(mean)))
    samples = mean + sigma * ((z * scales) @ basis.T)
    outside = np.any((samples < 0) | (samples > 1), axis=1)
    for k in np.flatnonzero(outside):
        x = samples[k]
        tries = 0
        while np.any((x < 0) | (x > 1)) and tries < MAX_RESAMPLES:
            x = mean + sigma * (basis @ (scales * rng.standard_normal(len(mean))))
            tries += 1
        samples[k] = x
    genotypes = np.clip(samples, 0.0, 1.0)
    samples.setflags(write=False)
    genotypes.setflags(write=False)
    return [
        Candidate(genotype=genotypes[k], gen_index=k, id=first_id + k,
                  generation=generation, sample=samples[k])
        for k in range(n)
    ]


def _refresh_eigensystem(state: CmaState) -> None:
    s = state.strategy
    gap = state.lam / (10 * state.dim * (s.c_1 + s.c_mu))
    if state.eval_count - state.eigen_eval <= gap:
        return
    state.eigen_eval = state.eval_count
    # tell() stores an exactly symmetric matrix
    vals, vecs = np.linalg.eigh(state.cov)
    if np.any(vals <= 0):
        raise FloatingPointError(f"covariance lost positive definiteness: {vals.min()}")
    state.eig_values = vals
    state.eig_basis = vecs


def ask(state: CmaState) -> list[Candidate]:
    """Sample one generation of ``lambda`` candidates."""
    if state.pending is not None:
        raise UsageError("ask called twice without tell")
    if state.generation > 0:
        _refresh_eigensystem(state)
    state.pending = _draw_batch(
        state.rng, state.mean, state.sigma, state.eig_basis,
        np.sqrt(state.eig_values), state.lam, state.eval_count, state.generation,
    )
    return list(state.pending)


def _ranking(objectives: np.ndarray) -> np.ndarray:
    # stable sort: ties resolved by gen_index
    return np.argsort(objectives, kind="stable")


def tell(state: CmaState, evaluations: Sequence[tuple[Candidate, float]]) -> CmaState:
    """Update the distribution from ``(candidate, objective)`` pairs (minimization)."""
    pending = state.pending
    if pending is None:
        raise UsageError("tell called without a preceding ask")
    if len(evaluations) != state.lam:
        raise UsageError(f"expected {state.lam} evaluations, got {len(evaluations)}")
    objectives = np.empty(state.lam)
    seen = set()
    for cand, f in evaluations:
        k = cand.gen_index
        if not 0 <= k < state.lam or pending[k].id != cand.id or k in seen:
            raise UsageError(f"candidate {cand.id} does not belong to this generation")
        if not math.isfinite(f):
            raise ValueError(f"non-finite objective for candidate {cand.id}")
        seen.add(k)
        objectives[k] = f

    s = state.strategy
    n = state.dim
    order = _ranking(objectives)[: s.mu]
    samples = np.array([pending[k].sample for k in order])

    old_mean = state.mean
    sigma = state.sigma
    mean = s.weights @ samples
    y = (samples - old_mean) / sigma
    y_w = (mean - old_mean) / sigma

    basis, d = state.eig_basis, np.sqrt(state.eig_values)
    inv_sqrt_c_yw = basis @ ((basis.T @ y_w) / d)
    ps = (1 - s.c_sigma) * state.path_sigma + math.sqrt(
        s.c_sigma * (2 - s.c_sigma) * s.mu_eff) * inv_sqrt_c_yw
    gen = state.generation + 1
    ps_norm = float(np.linalg.norm(ps))
    hsig = ps_norm / math.sqrt(1 - (1 - s.c_sigma) ** (2 * gen)) < (1.4 + 2 / (n + 1)) * s.chi_n
    pc = (1 - s.c_c) * state.path_cov
    if hsig:
        pc = pc + math.sqrt(s.c_c * (2 - s.c_c) * s.mu_eff) * y_w

    rank_mu = (y.T * s.weights) @ y
    decay = 1 - s.c_1 - s.c_mu + (0.0 if hsig else s.c_1 * s.c_c * (2 - s.c_c))
    cov = decay * state.cov + s.c_1 * np.outer(pc, pc) + s.c_mu * rank_mu

    state.mean = mean
    state.path_sigma = ps
    state.path_cov = pc
    state.cov = np.triu(cov) + np.triu(cov, 1).T
    state.sigma = sigma * math.exp((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1))
    state.generation = gen
    state.eval_count += state.lam
    state.pending = None
    return state


class PriorSampler:
    """Isotropic N(0.5, 0.2^2) sampler with the same draw procedure as ``ask``.

    Used as the random-search baseline: its first batch is identical to the
    first generation of a CMA-ES state built from the same seed.
    """

    def __init__(self, dim: int, seed: int, mean: float = 0.5, sigma: float = 0.2):
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        self.dim = dim
        self.mean = np.full(dim, float(mean))
        self.sigma = float(sigma)
        self.rng = make_rng(seed)
        self.generation = 0
        self.eval_count = 0
        self._basis = np.eye(dim)
        self._scales = np.ones(dim)

    def ask(self, n: int) -> list[Candidate]:
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        batch = _draw_batch(self.rng, self.mean, self.sigma, self._basis,
                            self._scales, n, self.eval_count, self.generation)
        self.generation += 1
        self.eval_count += n
        return batch


def sample_prior(dim: int, n: int, seed: int) -> list[Candidate]:
    return PriorSampler(dim, seed).ask(n)
