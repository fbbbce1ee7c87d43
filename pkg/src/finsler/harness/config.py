"""Run configuration: JSON schema, defaults and validation."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any

from jsonschema import Draft202012Validator

from ..errors import BuildRejectedError, ConfigError
from ..metrics import FAMILIES, Metric, MetricSpec, build_metric

# Every default tolerance used by the commands lives here, so the CLI and the
# acceptance tests read the same numbers.  Relative unless noted.
DEFAULT_TOLERANCES: dict[str, float] = {
    # min eigenvalue of g over max eigenvalue must exceed this
    "convexity": 1e-12,
    # g, C, h, M, G, E homogeneity and Euler-type contractions
    "homogeneity": 1e-10,
    # ||M|| <= tol * (1 + ||C||) for metrics known to be Randers
    "randers_M": 1e-7,
    # K^i_k y^k = 0 and g-self-adjointness of K
    "curvature_structure": 1e-8,
    # K^i_k - K F^2 h^i_k, relative to max |K^i_k|
    "scalar_curvature": 1e-7,
    # identity chain residuals, relative to the dominant term
    "identities": 1e-4,
    # identity chain on Riemannian metrics, where every term is exact
    "identities_riemannian": 1e-8,
    # closed-form vs transported Landsberg curvature
    "landsberg": 1e-6,
    # max |M'' + K F^2 M| <= tol * max |M| along a profile
    "profile_ode": 1e-4,
    # comparison margin (absolute)
    "profile_margin": 1e-6,
    # classify: randers-compatible iff every estimate <= tol * (1 + ||C||)
    "classify": 1e-7,
}

DEFAULT_SAMPLES: dict[str, int] = {
    "points": 10,
    "directions": 10,
    "identity_points": 5,
    "profiles": 2,
    "profile_steps": 400,
    "flags": 5,
}

_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["metric"],
    "additionalProperties": False,
    "properties": {
        "metric": {
            "type": "object",
            "required": ["family", "n"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": list(FAMILIES)},
                "n": {"type": "integer", "minimum": 2, "maximum": 8},
                "params": {"type": "object"},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in DEFAULT_TOLERANCES},
        },
        "samples": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "integer", "minimum": 1} for k in DEFAULT_SAMPLES},
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"x": _vec, "y": _vec},
        },
        "profile": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x": _vec, "y": _vec, "u": _vec,
                "T": {"type": "number"},
                "steps": {"type": "integer", "minimum": 1},
                "a": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "classify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_points": {"type": "integer", "minimum": 1},
                "n_dirs": {"type": "integer", "minimum": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "format": {"enum": ["csv", "json"]},
            },
        },
    },
}

_VALIDATOR = Draft202012Validator(SCHEMA)


@dataclass
class RunConfig:
    metric: MetricSpec
    seed: int = 0
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    samples: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_SAMPLES))
    eval: dict = field(default_factory=dict)
    profile: dict = field(default_factory=dict)
    classify: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "json"
    built: Metric | None = field(default=None, repr=False, compare=False)

    def build(self) -> Metric:
        if self.built is None:
            self.built = build_metric(self.metric)
        return self.built


def _pointer(parts) -> str:
    return "/" + "/".join(str(p) for p in parts) if parts else "/"


def _describe(err) -> str:
    path = list(err.absolute_path)
    if err.validator == "required":
        # name the missing key itself
        missing = err.message.split("'")[1] if "'" in err.message else ""
        path = path + [missing]
    return f"{_pointer(path)}: {err.message}"


def _check_dims(doc: dict, n: int) -> list[str]:
    bad = []
    for section, keys in (("eval", ("x", "y")), ("profile", ("x", "y", "u"))):
        for k in keys:
            v = doc.get(section, {}).get(k)
            if v is not None and len(v) != n:
                bad.append(f"/{section}/{k}: expected {n} components, got {len(v)}")
    return bad


def parse_config(text: str | bytes | dict) -> RunConfig:
    """Validate a JSON config, collecting every violation before failing."""
    if isinstance(text, dict):
        doc = copy.deepcopy(text)
    else:
        if isinstance(text, bytes):
            try:
                text = text.decode("utf-8")
            except UnicodeDecodeError as e:
                raise ConfigError([f"/: not UTF-8 ({e})"]) from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError([f"/: invalid JSON ({e.msg} at line {e.lineno})"]) from None

    violations = sorted(_describe(e) for e in _VALIDATOR.iter_errors(doc))
    if not violations:
        violations = _check_dims(doc, doc["metric"]["n"])
    if violations:
        raise ConfigError(violations)

    spec = MetricSpec.from_dict(doc["metric"])
    out = doc.get("output", {})
    cfg = RunConfig(
        metric=spec,
        seed=doc.get("seed", 0),
        tolerances={**DEFAULT_TOLERANCES, **doc.get("tolerances", {})},
        samples={**DEFAULT_SAMPLES, **doc.get("samples", {})},
        eval=doc.get("eval", {}),
        profile=doc.get("profile", {}),
        classify=doc.get("classify", {}),
        out=out.get("path"),
        format=out.get("format", "json"),
    )
    try:
        cfg.build()
    except BuildRejectedError as e:
        raise ConfigError([f"/metric{e.path or ''}: {e}"]) from None
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError([f"/metric/params: {e}"]) from None
    return cfg
