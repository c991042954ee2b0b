"""Search spaces: named hyperparameters over the unit cube.

Every dimension maps a genotype coordinate ``x`` in [0, 1] to a value by one
of five closed-form transforms with constants ``(a, b)``:

=============== ========================
kind            value
=============== ========================
linear          a + b*x
pow10_affine    10 ** (a + b*x)
pow2_affine     2 ** (a + b*x)
double_exp10    10 ** (a + 10 ** (b*x))
one_minus_pow10 1 - 10 ** (a + b*x)
=============== ========================

Dimensions flagged ``integer_round`` are rounded half-up after the
continuous transform and inverted from the value as given.

Space file format
-----------------
UTF-8 text, one dimension per line, in genotype order. Blank lines and
lines starting with ``#`` are ignored. A record is a whitespace-separated
list of ``key=value`` fields, all seven required, in any order::

    name=bn_alpha kind=linear a=0.01 b=0.2 integer_round=false lo=0.01 hi=0.21

``name`` is a Python identifier, ``kind`` one of the kinds above, ``a``,
``b``, ``lo``, ``hi`` are decimal floats and ``integer_round`` is ``true``
or ``false``. ``lo``/``hi`` are the declared range, kept for validation
and reporting only. :func:`dump_space` writes fields in the canonical order
``name kind a b integer_round lo hi`` using the shortest round-tripping
float representation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

KINDS = ("linear", "pow10_affine", "pow2_affine", "double_exp10", "one_minus_pow10")
FIELDS = ("name", "kind", "a", "b", "integer_round", "lo", "hi")
BUILTIN_TAGS = ("mnist_adadelta", "mnist_adam")

_INVERSE_SLACK = 1e-12


class SpaceError(ValueError):
    pass


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    a: float
    b: float
    integer_round: bool
    lo: float
    hi: float

    def __post_init__(self):
        for key in ("a", "b", "lo", "hi"):
            object.__setattr__(self, key, float(getattr(self, key)))
        object.__setattr__(self, "integer_round", bool(self.integer_round))
        if not self.name.isidentifier():
            raise SpaceError(f"invalid parameter name {self.name!r}")
        if self.kind not in KINDS:
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if self.b == 0 or not math.isfinite(self.b) or not math.isfinite(self.a):
            raise SpaceError(f"{self.name}: b must be finite and non-zero")

    def continuous(self, x: float) -> float:
        a, b = self.a, self.b
        if self.kind == "linear":
            return a + b * x
        if self.kind == "pow10_affine":
            return 10.0 ** (a + b * x)
        if self.kind == "pow2_affine":
            return 2.0 ** (a + b * x)
        if self.kind == "double_exp10":
            return 10.0 ** (a + 10.0 ** (b * x))
        return 1.0 - 10.0 ** (a + b * x)

    def forward(self, x: float) -> float | int:
        v = self.continuous(x)
        return _round_half_up(v) if self.integer_round else v

    def image(self) -> tuple[float, float]:
        """Interval of continuous values reached over x in [0, 1]."""
        v0, v1 = self.continuous(0.0), self.continuous(1.0)
        return (min(v0, v1), max(v0, v1))

    def inverse(self, v: float) -> float:
        lo, hi = self.image()
        slack = _INVERSE_SLACK * max(abs(lo), abs(hi), 1.0)
        if not (lo - slack <= v <= hi + slack):
            raise SpaceError(
                f"{self.name}: value {v!r} outside admissible interval [{lo!r}, {hi!r}]")
        a, b = self.a, self.b
        if self.kind == "linear":
            x = (v - a) / b
        elif self.kind == "pow10_affine":
            x = (math.log10(v) - a) / b
        elif self.kind == "pow2_affine":
            x = (math.log2(v) - a) / b
        elif self.kind == "double_exp10":
            x = math.log10(math.log10(v) - a) / b
        else:
            x = (math.log10(1.0 - v) - a) / b
        return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[ParamSpec, ...]

    def __post_init__(self):
        seen = set()
        for p in self.dims:
            if p.name in seen:
                raise SpaceError(f"duplicate parameter name {p.name!r}")
            seen.add(p.name)
        if not self.dims:
            raise SpaceError("a search space needs at least one dimension")

    @property
    def dim_count(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.dims]

    def __getitem__(self, name: str) -> ParamSpec:
        for p in self.dims:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_records(self) -> list[dict]:
        return [{f: getattr(p, f) for f in FIELDS} for p in self.dims]

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "SearchSpace":
        return cls(tuple(ParamSpec(**{f: r[f] for f in FIELDS}) for r in records))


def transform(space: SearchSpace, genotype: Sequence[float]) -> dict[str, float | int]:
    """Map a genotype in [0, 1]^d to named hyperparameter values."""
    if len(genotype) != space.dim_count:
        raise SpaceError(f"genotype has {len(genotype)} coordinates, space has {space.dim_count}")
    out = {}
    for p, x in zip(space.dims, genotype):
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise SpaceError(f"{p.name}: coordinate {x!r} outside [0, 1]")
        out[p.name] = p.forward(x)
    return out


def inverse_transform(space: SearchSpace, values: Mapping[str, float]) -> list[float]:
    missing = [n for n in space.names if n not in values]
    if missing:
        raise SpaceError(f"missing values for {', '.join(missing)}")
    extra = sorted(set(values) - set(space.names))
    if extra:
        raise SpaceError(f"unknown parameters {', '.join(extra)}")
    return [p.inverse(float(values[p.name])) for p in space.dims]


# -- text format -----------------------------------------------------------

def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _fmt(v: float) -> str:
    return repr(float(v))


def parse_space(text: str) -> SearchSpace:
    dims = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields: dict[str, str] = {}
        for tok in line.split():
            key, sep, val = tok.partition("=")
            if not sep:
                raise SpaceError(f"line {lineno}: expected key=value, got {tok!r}")
            if key not in FIELDS:
                raise SpaceError(f"line {lineno}: unknown field {key!r}")
            if key in fields:
                raise SpaceError(f"line {lineno}: field {key!r} given twice")
            fields[key] = val
        absent = [f for f in FIELDS if f not in fields]
        if absent:
            raise SpaceError(f"line {lineno}: missing field(s) {', '.join(absent)}")
        name = fields["name"]
        if name in seen:
            raise SpaceError(
                f"line {lineno}: duplicate name {name!r} (first defined on line {seen[name]})")
        seen[name] = lineno
        try:
            kw = {
                "name": name,
                "kind": fields["kind"],
                "integer_round": _parse_bool(fields["integer_round"]),
            }
            for key in ("a", "b", "lo", "hi"):
                try:
                    kw[key] = float(fields[key])
                except ValueError:
                    raise ValueError(f"field {key!r}: not a number: {fields[key]!r}") from None
            dims.append(ParamSpec(**kw))
        except ValueError as exc:
            raise SpaceError(f"line {lineno}: {exc}") from None
    if not dims:
        raise SpaceError("space file defines no dimensions")
    return SearchSpace(tuple(dims))


def dump_space(space: SearchSpace) -> str:
    lines = []
    for p in space.dims:
        lines.append(" ".join([
            f"name={p.name}",
            f"kind={p.kind}",
            f"a={_fmt(p.a)}",
            f"b={_fmt(p.b)}",
            f"integer_round={'true' if p.integer_round else 'false'}",
            f"lo={_fmt(p.lo)}",
            f"hi={_fmt(p.hi)}",
        ]))
    return "\n".join(lines) + "\n"


def load_space(path) -> SearchSpace:
    with open(path, encoding="utf-8") as fh:
        return parse_space(fh.read())


# -- MNIST spaces ----------------------------------------------------------

_SHARED_HEAD = (
    ParamSpec("selection_pressure_start", "double_exp10", -2, 2, False, 1e-2, 1e98),
    ParamSpec("selection_pressure_end", "double_exp10", -2, 2, False, 1e-2, 1e98),
    ParamSpec("batch_size_start", "pow2_affine", 4, 4, True, 16, 256),
    ParamSpec("batch_size_end", "pow2_affine", 4, 4, True, 16, 256),
    ParamSpec("loss_recompute_freq", "linear", 0, 2, False, 0, 2),
    ParamSpec("bn_alpha", "linear", 0.01, 0.2, False, 0.01, 0.21),
    ParamSpec("bn_epsilon", "pow10_affine", -8, 5, False, 1e-8, 1e-3),
    ParamSpec("dropout_pool1", "linear", 0, 0.8, False, 0, 0.8),
    ParamSpec("dropout_pool2", "linear", 0, 0.8, False, 0, 0.8),
    ParamSpec("dropout_output", "linear", 0, 0.8, False, 0, 0.8),
    ParamSpec("filters_conv1", "pow2_affine", 3, 5, True, 8, 256),
    ParamSpec("filters_conv2", "pow2_affine", 3, 5, True, 8, 256),
    ParamSpec("units_fc", "pow2_affine", 4, 5, True, 16, 512),
)

_ADADELTA = (
    ParamSpec("learning_rate_start", "pow10_affine", 0.5, -2, False, 10**-1.5, 10**0.5),
    ParamSpec("learning_rate_end", "pow10_affine", 0.5, -2, False, 10**-1.5, 10**0.5),
    ParamSpec("rho", "linear", 0.8, 0.199, False, 0.8, 0.999),
    ParamSpec("epsilon", "pow10_affine", -3, -6, False, 1e-9, 1e-3),
)

_ADAM = (
    ParamSpec("learning_rate_start", "pow10_affine", -1, -3, False, 1e-4, 1e-1),
    ParamSpec("learning_rate_end", "pow10_affine", -3, -3, False, 1e-6, 1e-3),
    ParamSpec("beta1", "linear", 0.8, 0.199, False, 0.8, 0.999),
    ParamSpec("epsilon", "pow10_affine", -3, -6, False, 1e-9, 1e-3),
    ParamSpec("beta2", "one_minus_pow10", -2, -2, False, 0.99, 0.9999),
)

_TAIL = (
    ParamSpec("adaptation_end_epoch", "linear", 20, 200, True, 20, 220),
)


def builtin_space(tag: str) -> SearchSpace:
    """The MNIST network/optimizer spaces; Adadelta has no beta2 row (18 dims)."""
    if tag == "mnist_adam":
        return SearchSpace(_SHARED_HEAD + _ADAM + _TAIL)
    if tag == "mnist_adadelta":
        return SearchSpace(_SHARED_HEAD + _ADADELTA + _TAIL)
    raise SpaceError(f"unknown builtin space {tag!r}; choose from {', '.join(BUILTIN_TAGS)}")


def shipped_space_text(tag: str) -> str:
    if tag not in BUILTIN_TAGS:
        raise SpaceError(f"unknown builtin space {tag!r}")
    return resources.files("cmahpo.spaces").joinpath(f"{tag}.space").read_text("utf-8")


def resolve_space(ref: str) -> SearchSpace:
    """``builtin:TAG`` or a path to a space file."""
    if ref.startswith("builtin:"):
        return builtin_space(ref.split(":", 1)[1])
    return load_space(ref)
