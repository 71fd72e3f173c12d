"""Experiment configuration: JSON schema, parsing and content hashing.

A configuration fixes every physical parameter and every seed, so a run is
reproducible from the file alone.  There are no defaults for ``p``,
``beta``, ``h`` or the system size; the remaining fields (caps, slack,
output directory) have defaults that are written back into the parsed
object and therefore into the manifest.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import jsonschema

from .errors import ParameterError

SUBCOMMANDS = ("landscape", "cwexact", "simulate", "crossover", "capacity", "couple")

_NUM = {"type": "number"}
_INT = {"type": "integer"}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "metaspin experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["subcommand", "params"],
    "properties": {
        "subcommand": {"enum": list(SUBCOMMANDS)},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["p", "beta", "h"],
            "properties": {
                "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "h": {"type": "number", "minimum": 0},
                "n": {"type": "integer", "minimum": 2},
                "ns": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "kind": {"enum": ["er_graph", "mean_field"]},
            },
            "oneOf": [{"required": ["n"], "not": {"required": ["ns"]}},
                      {"required": ["ns"], "not": {"required": ["n"]}}],
        },
        "seeds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "base": {"type": "integer", "minimum": 0},
                "replicas": {"type": "integer", "minimum": 1},
                "graphs": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
            },
        },
        "caps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "step_cap": {"type": "integer", "minimum": 1},
                "budget": {"type": "integer", "minimum": 1},
                "horizon": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "max_transitions": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "mode": {"enum": ["short", "long"]},
        "estimator": {"enum": ["pooled", "quenched"]},
        "output": {"type": "object", "additionalProperties": False, "properties": {"dir": {"type": "string"}}},
    },
}


@dataclass(frozen=True)
class Params:
    p: float
    beta: float
    h: float
    n: Optional[int] = None
    ns: Optional[tuple] = None
    kind: str = "er_graph"

    @property
    def sizes(self):
        return (self.n,) if self.n is not None else tuple(self.ns)


@dataclass(frozen=True)
class Seeds:
    base: int = 0
    replicas: int = 100
    graphs: tuple = (0,)


@dataclass(frozen=True)
class Caps:
    step_cap: int = 10**9
    budget: int = 20
    horizon: Optional[float] = None
    max_transitions: Optional[int] = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment configuration (immutable)."""

    subcommand: str
    params: Params
    seeds: Seeds = field(default_factory=Seeds)
    caps: Caps = field(default_factory=Caps)
    eps: float = 0.01
    mode: str = "short"
    estimator: str = "pooled"
    output: dict = field(default_factory=lambda: {"dir": "out"})

    def to_dict(self):
        d = asdict(self)
        prm = d["params"]
        for key in ("n", "ns"):
            if prm[key] is None:
                del prm[key]
        if "ns" in prm:
            prm["ns"] = list(prm["ns"])
        d["seeds"]["graphs"] = list(d["seeds"]["graphs"])
        d["output"] = dict(d["output"])
        return d

    def model_params(self, n=None):
        from .spin import ModelParams

        p = self.params
        return ModelParams(p.p, p.beta, p.h, n=n if n is not None else p.n, kind=p.kind)


def validate(data):
    """Validate a raw mapping against :data:`SCHEMA`; raises :class:`ParameterError`."""
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ParameterError(f"config invalid at {where}: {exc.message}") from None


def from_dict(data) -> ExperimentConfig:
    validate(data)
    prm = dict(data["params"])
    if "ns" in prm:
        prm["ns"] = tuple(prm["ns"])
    seeds = dict(data.get("seeds", {}))
    if "graphs" in seeds:
        seeds["graphs"] = tuple(seeds["graphs"])
    return ExperimentConfig(
        subcommand=data["subcommand"],
        params=Params(**prm),
        seeds=Seeds(**seeds),
        caps=Caps(**data.get("caps", {})),
        eps=data.get("eps", 0.01),
        mode=data.get("mode", "short"),
        estimator=data.get("estimator", "pooled"),
        output=dict(data.get("output", {"dir": "out"})),
    )


def serialize(config) -> str:
    """Canonical JSON text (sorted keys, no whitespace variation)."""
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))


def parse(text) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config is not valid JSON: {exc}") from None
    return from_dict(data)


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def content_hash(config) -> str:
    """Git blob hash (SHA-1 over ``"blob <len>\\0" + body``) of the canonical serialization."""
    body = serialize(config).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()
