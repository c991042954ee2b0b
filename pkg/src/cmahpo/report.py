"""Run-log analysis: best-so-far trajectories, genotype and error densities.

Tables are CSV with a leading ``#`` line naming the source log(s) and the
parameters used, then a column header row. Numbers are written with 17
significant digits so they read back bit-exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .kde import DensityEstimate, kde_diffusion
from .runlog import RunLog


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    eval_index: np.ndarray       # 1-based evaluation number
    objective: np.ndarray        # nan where the evaluation did not succeed
    running_best: np.ndarray     # inf until the first ok evaluation
    generations: np.ndarray
    generation_best: np.ndarray
    generation_median: np.ndarray

    def best_at(self, n_evals: int) -> float:
        return float(self.running_best[min(n_evals, len(self.running_best)) - 1])


def best_so_far(log: RunLog) -> Trajectory:
    records = sorted(log.records, key=lambda r: r.candidate_id)
    if not records:
        raise ReportError("run log has no records")
    if not any(r.status == "ok" for r in records):
        raise ReportError("run log has no successful evaluations")
    obj = np.array([r.objective if r.status == "ok" else np.nan for r in records])
    running = np.minimum.accumulate(np.where(np.isnan(obj), np.inf, obj))

    gens = sorted({r.generation for r in records})
    g_best, g_med = [], []
    for g in gens:
        vals = [r.objective for r in records if r.generation == g and r.status == "ok"]
        g_best.append(min(vals) if vals else np.nan)
        g_med.append(float(np.median(vals)) if vals else np.nan)
    return Trajectory(
        eval_index=np.arange(1, len(records) + 1),
        objective=obj,
        running_best=running,
        generations=np.array(gens),
        generation_best=np.array(g_best),
        generation_median=np.array(g_med),
    )


def density_report(log: RunLog, first_n: int = 30, last_m: int = 100,
                   mesh: int = 256) -> dict[str, tuple[DensityEstimate, DensityEstimate]]:
    """Per-dimension genotype densities of the first ``first_n`` and last ``last_m`` evaluations."""
    records = sorted(log.records, key=lambda r: r.candidate_id)
    if first_n < 1 or last_m < 1:
        raise ReportError("first_n and last_m must be positive")
    if len(records) < first_n + last_m:
        raise ReportError(
            f"insufficient records: need {first_n + last_m}, log has {len(records)}")
    geno = np.array([r.genotype for r in records])
    early, late = geno[:first_n], geno[-last_m:]
    out = {}
    for j, name in enumerate(log.dim_names):
        out[name] = (kde_diffusion(early[:, j], mesh, 0.0, 1.0),
                     kde_diffusion(late[:, j], mesh, 0.0, 1.0))
    return out


@dataclass(frozen=True)
class ErrorDensity:
    estimate: DensityEstimate
    divergence_fraction: float
    source: str


def divergence_fraction(log: RunLog, threshold: float = 0.7) -> float:
    if not log.records:
        raise ReportError("run log has no records")
    bad = sum(1 for r in log.records if r.status != "ok" or r.objective > threshold)
    return bad / len(log.records)


def error_density(logs: Sequence[RunLog], mesh: int = 5000,
                  divergence_threshold: float = 0.7) -> list[ErrorDensity]:
    if not logs:
        raise ReportError("no run logs given")
    out = []
    for log in logs:
        frac = divergence_fraction(log, divergence_threshold)
        vals = np.array([r.objective for r in log.records if r.status == "ok"])
        if len(vals) == 0:
            raise ReportError(f"{log.source or 'log'}: no successful evaluations")
        lo, hi = float(vals.min()), float(vals.max())
        pad = 0.05 * (hi - lo) if hi > lo else 0.05 * max(abs(lo), 1.0)
        est = kde_diffusion(vals, mesh, lo - pad, hi + pad)
        out.append(ErrorDensity(est, frac, log.source))
    return out


# -- tables ----------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if not math.isfinite(v) else format(v, ".17g")


def _write(path: Path, comment: str, header: Sequence[str], rows) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def write_trajectory(log: RunLog, path) -> Trajectory:
    traj = best_so_far(log)
    records = sorted(log.records, key=lambda r: r.candidate_id)
    gen_pos = {g: i for i, g in enumerate(traj.generations)}
    rows = []
    for i, r in enumerate(records):
        k = gen_pos[r.generation]
        rows.append([traj.eval_index[i], r.candidate_id, r.generation, r.status,
                     traj.objective[i], traj.running_best[i],
                     traj.generation_best[k], traj.generation_median[k]])
    _write(path, f"trajectory source={log.source}",
           ["eval_index", "candidate_id", "generation", "status", "objective",
            "running_best", "generation_best", "generation_median"], rows)
    return traj


def write_density_report(log: RunLog, path, first_n: int = 30, last_m: int = 100,
                         mesh: int = 256) -> dict:
    report = density_report(log, first_n, last_m, mesh)
    names = list(report)
    grid = report[names[0]][0].mesh
    header = ["mesh"]
    for name in names:
        header += [f"{name}_first", f"{name}_last"]
    rows = []
    for i, x in enumerate(grid):
        row = [x]
        for name in names:
            first, last = report[name]
            row += [first.density[i], last.density[i]]
        rows.append(row)
    _write(path, f"genotype_density source={log.source} first={first_n} last={last_m} "
                 f"mesh={len(grid)}", header, rows)
    return report


def write_error_density(logs: Sequence[RunLog], path, mesh: int = 5000,
                        divergence_threshold: float = 0.7) -> list[ErrorDensity]:
    results = error_density(logs, mesh, divergence_threshold)
    header, columns = [], []
    for k, res in enumerate(results):
        header += [f"mesh_{k}", f"density_{k}"]
        columns += [res.estimate.mesh, res.estimate.density]
    sources = ",".join(r.source or f"log{k}" for k, r in enumerate(results))
    fractions = ",".join(fmt(r.divergence_fraction) for r in results)
    comment = (f"error_density sources={sources} mesh={results[0].estimate.mesh_points} "
               f"threshold={fmt(divergence_threshold)} divergence_fraction={fractions}")
    _write(path, comment, header, zip(*columns))
    return results
