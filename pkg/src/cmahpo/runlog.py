"""Append-only JSON-lines run logs.

Line 1 is a header object (``"type": "header"``) holding the run id, the
run configuration, the search space records and a description of the
evaluator. Every further line is one evaluation record, written with keys
in this order::

    type, candidate_id, generation, gen_index, genotype, phenotype,
    objective, status, wall_seconds, worker_slot

``objective`` is ``null`` unless ``status`` is ``"ok"``. Only
``wall_seconds`` and ``worker_slot`` depend on timing; :data:`TIMING_FIELDS`
names them so comparisons can drop them.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Any, Iterable

from .cma import Candidate

FORMAT = "cmahpo-runlog/1"
STATUSES = ("ok", "failed", "timeout")
TIMING_FIELDS = ("wall_seconds", "worker_slot")


class RunLogError(ValueError):
    pass


@dataclass
class EvaluationRecord:
    candidate_id: int
    generation: int
    gen_index: int
    genotype: list[float]
    phenotype: dict[str, Any]
    objective: float | None
    status: str
    wall_seconds: float = 0.0
    worker_slot: int = 0
    candidate: Candidate | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise RunLogError(f"unknown status {self.status!r}")
        ok_value = self.objective is not None and math.isfinite(self.objective)
        if (self.status == "ok") != ok_value:
            raise RunLogError(
                f"record {self.candidate_id}: status {self.status!r} with objective {self.objective!r}")

    def to_dict(self) -> dict:
        return {
            "type": "record",
            "candidate_id": self.candidate_id,
            "generation": self.generation,
            "gen_index": self.gen_index,
            "genotype": [float(v) for v in self.genotype],
            "phenotype": self.phenotype,
            "objective": self.objective,
            "status": self.status,
            "wall_seconds": self.wall_seconds,
            "worker_slot": self.worker_slot,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "EvaluationRecord":
        return cls(
            candidate_id=int(obj["candidate_id"]),
            generation=int(obj["generation"]),
            gen_index=int(obj["gen_index"]),
            genotype=[float(v) for v in obj["genotype"]],
            phenotype=dict(obj.get("phenotype", {})),
            objective=None if obj.get("objective") is None else float(obj["objective"]),
            status=obj["status"],
            wall_seconds=float(obj.get("wall_seconds", 0.0)),
            worker_slot=int(obj.get("worker_slot", 0)),
        )


@dataclass
class RunLog:
    header: dict
    records: list[EvaluationRecord] = field(default_factory=list)
    source: str = ""

    @property
    def dim_names(self) -> list[str]:
        space = self.header.get("space")
        if space:
            return [d["name"] for d in space]
        if self.records:
            return [f"x{i + 1}" for i in range(len(self.records[0].genotype))]
        return []

    @property
    def best_index(self) -> int | None:
        """Position of the first record holding the lowest ok objective."""
        best, idx = math.inf, None
        for i, r in enumerate(self.records):
            if r.status == "ok" and r.objective < best:
                best, idx = r.objective, i
        return idx

    @property
    def best(self) -> EvaluationRecord | None:
        i = self.best_index
        return None if i is None else self.records[i]


class RunLogWriter:
    def __init__(self, stream: IO[str]):
        self.stream = stream

    def write_header(self, header: dict) -> None:
        self.stream.write(json.dumps(header, allow_nan=False) + "\n")

    def write_records(self, records: Iterable[EvaluationRecord]) -> None:
        for r in records:
            self.stream.write(r.to_line())
        self.stream.flush()


def parse_run_log(lines: Iterable[str], source: str = "") -> RunLog:
    header = None
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError:
            raise RunLogError(f"{source}:{lineno}: not valid JSON") from None
        kind = obj.get("type")
        if kind == "header":
            if header is not None or records:
                raise RunLogError(f"{source}:{lineno}: unexpected header")
            header = obj
        elif kind == "record":
            try:
                records.append(EvaluationRecord.from_dict(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise RunLogError(f"{source}:{lineno}: bad record: {exc}") from None
        else:
            raise RunLogError(f"{source}:{lineno}: unknown line type {kind!r}")
    if header is None:
        raise RunLogError(f"{source}: missing header line")
    return RunLog(header=header, records=records, source=source)


def read_run_log(path) -> RunLog:
    with open(path, encoding="utf-8") as fh:
        return parse_run_log(fh, source=str(path))


def strip_timing(line_or_record) -> dict:
    """Record as a dict without the timing-dependent fields."""
    obj = line_or_record.to_dict() if isinstance(line_or_record, EvaluationRecord) \
        else json.loads(line_or_record)
    for key in TIMING_FIELDS:
        obj.pop(key, None)
    return obj
