"""Evaluator contract and its line-delimited JSON wire form.

An evaluator is any callable taking an :class:`EvalRequest` and returning
the objective as a float. It signals problems by raising
:class:`EvaluationFailed` or :class:`EvaluationTimeout`; a non-finite
return value is treated as a failure by the engine.

Over the wire (one process per evaluation) the request is a single JSON
line on stdin::

    {"run_id": "cma-7", "candidate_id": 12, "generation": 1,
     "budget_seconds": 30.0, "params": {"bn_alpha": 0.11, ...},
     "genotype": [0.5, ...]}

and the evaluator answers with one JSON line on stdout, either
``{"objective": 0.0123}`` or ``{"error": "diverged"}``, then exits 0.
``genotype`` is an extension carrying the raw unit-cube coordinates; it
lets synthetic evaluators reproduce in-process results exactly and may be
ignored by real ones.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping


class EvaluationFailed(RuntimeError):
    pass


class EvaluationTimeout(RuntimeError):
    pass


class ProtocolError(EvaluationFailed):
    pass


@dataclass(frozen=True)
class EvalRequest:
    run_id: str
    candidate_id: int
    generation: int
    budget_seconds: float | None
    params: Mapping[str, float | int] = field(default_factory=dict)
    genotype: tuple[float, ...] = ()

    def to_line(self) -> str:
        return json.dumps({
            "run_id": self.run_id,
            "candidate_id": self.candidate_id,
            "generation": self.generation,
            "budget_seconds": self.budget_seconds,
            "params": dict(self.params),
            "genotype": list(self.genotype),
        }, allow_nan=False) + "\n"

    @classmethod
    def from_line(cls, line: str) -> "EvalRequest":
        try:
            obj = json.loads(line)
            return cls(
                run_id=str(obj["run_id"]),
                candidate_id=int(obj["candidate_id"]),
                generation=int(obj["generation"]),
                budget_seconds=obj.get("budget_seconds"),
                params=dict(obj.get("params", {})),
                genotype=tuple(float(v) for v in obj.get("genotype", ())),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed request: {exc}") from None


Evaluator = Callable[[EvalRequest], float]


def encode_response(objective: float | None = None, error: str | None = None) -> str:
    if error is not None:
        return json.dumps({"error": error}) + "\n"
    return json.dumps({"objective": objective}) + "\n"


def decode_response(line: str) -> float:
    """Objective from a response line; raises on errors or protocol violations."""
    try:
        obj = json.loads(line)
    except ValueError:
        raise ProtocolError(f"response is not JSON: {line[:200]!r}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("response is not an object")
    if "error" in obj:
        raise EvaluationFailed(f"evaluator reported: {obj['error']}")
    value = obj.get("objective")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"objective is not a number: {value!r}")
    if not math.isfinite(value):
        raise EvaluationFailed(f"non-finite objective {value!r}")
    return float(value)
