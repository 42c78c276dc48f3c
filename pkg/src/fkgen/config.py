"""Scenario configuration: YAML in, validated and resolved dict out."""

import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .exceptions import ConfigError
from .fixtures import load_model
from .model import PAIRWISE, TERMINAL, FiniteStateModel, PathFunctional, iid_toy
from .particles import SelectionConfig

TERMINAL_TERMS = ("value", "indicator", "constant", "scaled-value")
PAIRWISE_TERMS = ("square-diff", "abs-diff", "product", "jump")

_number_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_matrix = {"type": "array", "items": _number_list, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["finite", "iid-toy", "fixture"]},
                "fixture": {"type": "string"},
                "initial": _number_list,
                "transition": {"oneOf": [_matrix, {"type": "array", "items": _matrix}]},
                "potential": {"oneOf": [_number_list, _matrix]},
                "values": _number_list,
                "reversible": _number_list,
            },
        },
        "N": {"type": "integer", "minimum": 1},
        "horizon": {"type": "integer", "minimum": 0},
        "epsilon": {"oneOf": [{"enum": ["zero", "reciprocal-sup"]},
                              {"type": "number", "minimum": 0}]},
        "functional": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [TERMINAL, PAIRWISE]},
                "term": {"enum": list(TERMINAL_TERMS + PAIRWISE_TERMS)},
                "initial_term": {"enum": list(TERMINAL_TERMS)},
                "state": {"type": "integer", "minimum": 0},
                "constant": {"type": "number"},
                "scale": {"type": "number"},
                "normalized": {"type": "boolean"},
            },
        },
        "replicates": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "out": {"type": "string"},
        "estimators": {"type": "array", "uniqueItems": True, "items": {
            "enum": ["normalizer", "smoothed", "gamma_smoothed", "genealogical", "filter"]}},
        "compress": {"type": "boolean"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizons": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "N": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "estimators": {"type": "array", "items": {"enum": ["genealogical", "smoothed"]}},
                "fit_offset": {"type": "number", "minimum": 0},
            },
        },
        "checks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enumeration_horizon": {"type": "integer", "minimum": 0},
                "random_vectors": {"type": "integer", "minimum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "unbiasedness": {"type": "boolean"},
                "enumeration_cap": {"type": "integer", "minimum": 1},
            },
        },
        "hprocess": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
            },
        },
    },
}

DEFAULTS = {
    "N": 100,
    "epsilon": "zero",
    "replicates": 1,
    "seed": 0,
    "compress": True,
    "functional": {"kind": TERMINAL, "term": "value", "normalized": False},
}


def load_config(path, seed=None, out=None):
    """Read, validate and resolve a YAML scenario file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return resolve_config(raw if raw is not None else {}, seed=seed, out=out,
                          base_dir=Path(path).parent)


def resolve_config(raw, seed=None, out=None, base_dir=None):
    """Validate ``raw`` against the schema and fill in defaults and overrides."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    cfg = json.loads(json.dumps(raw))
    for key, val in DEFAULTS.items():
        if isinstance(val, dict):
            cfg[key] = {**val, **cfg.get(key, {})}
        else:
            cfg.setdefault(key, val)
    if seed is not None:
        cfg["seed"] = int(seed)
    if out is not None:
        cfg["out"] = str(out)
    cfg.setdefault("out", "fkgen-out")
    model = cfg["model"]
    if model["family"] == "fixture":
        if "fixture" not in model:
            raise ConfigError("model/fixture: required for the fixture family")
        path = Path(model["fixture"])
        if base_dir is not None and not path.is_absolute() and (base_dir / path).exists():
            model["fixture"] = str(base_dir / path)
    elif model["family"] == "finite":
        missing = [k for k in ("initial", "transition", "potential") if k not in model]
        if missing:
            raise ConfigError(f"model: finite family needs {', '.join(missing)}")
    if "horizon" not in cfg:
        stacked = model["family"] == "finite" and (
            np.ndim(model["transition"]) == 3 or np.ndim(model["potential"]) == 2)
        if model["family"] == "iid-toy" or (model["family"] == "finite" and not stacked):
            raise ConfigError(f"horizon: required for the {model['family']} family")
        cfg["horizon"] = build_model(cfg).horizon
    return cfg


def scenario_hash(cfg):
    """SHA-256 of the canonical JSON form of a resolved config (``out`` excluded)."""
    body = {k: v for k, v in cfg.items() if k != "out"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_model(cfg, horizon=None):
    spec = cfg["model"]
    horizon = cfg.get("horizon") if horizon is None else horizon
    family = spec["family"]
    try:
        if family == "iid-toy":
            return iid_toy(horizon, tuple(spec.get("values", (-1.0, 1.0))))
        if family == "fixture":
            return load_model(spec["fixture"], horizon=horizon)
        trans = np.asarray(spec["transition"], dtype=float)
        pots = np.asarray(spec["potential"], dtype=float)
        stacked = trans.ndim == 3 or pots.ndim == 2
        model = FiniteStateModel(spec["initial"], trans, pots,
                                 horizon=None if stacked else horizon,
                                 values=spec.get("values"), reversible_measure=spec.get("reversible"))
        return model.with_horizon(horizon) if horizon is not None else model
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc


def state_values(model):
    """Numeric labels of the states (``0..d-1`` when none are declared)."""
    if getattr(model, "values", None) is not None:
        return np.asarray(model.values, dtype=float)
    return np.arange(model.n_states, dtype=float)


def _terminal_term(name, spec, v):
    if name == "value":
        return lambda x: v[np.asarray(x)]
    if name == "scaled-value":
        c = float(spec.get("scale", 1.0))
        return lambda x: c * v[np.asarray(x)]
    if name == "indicator":
        s = int(spec.get("state", 0))
        return lambda x: (np.asarray(x) == s).astype(float)
    if name == "constant":
        c = float(spec.get("constant", 1.0))
        return lambda x: np.full(np.shape(x), c)
    raise ConfigError(f"functional/term: {name!r} is not a terminal term")


def _pairwise_term(name, v):
    if name == "square-diff":
        return lambda a, b: (v[np.asarray(b)] - v[np.asarray(a)]) ** 2
    if name == "abs-diff":
        return lambda a, b: np.abs(v[np.asarray(b)] - v[np.asarray(a)])
    if name == "product":
        return lambda a, b: v[np.asarray(a)] * v[np.asarray(b)]
    if name == "jump":
        return lambda a, b: (np.asarray(a) != np.asarray(b)).astype(float)
    raise ConfigError(f"functional/term: {name!r} is not a pairwise term")


def build_functional(cfg, model, horizon=None):
    """Homogeneous additive functional from the built-in term catalog."""
    spec = cfg["functional"]
    horizon = cfg["horizon"] if horizon is None else horizon
    v = state_values(model)
    normalized = bool(spec.get("normalized", False))
    if spec["kind"] == TERMINAL:
        f = _terminal_term(spec["term"], spec, v)
        return PathFunctional.homogeneous(f, horizon, normalized=normalized)
    if "initial_term" in spec:
        f0 = _terminal_term(spec["initial_term"], spec, v)
    else:
        f0 = lambda x: np.zeros(np.shape(x))  # noqa: E731
    fp = _pairwise_term(spec["term"], v)
    return PathFunctional.pairwise(f0, [fp] * horizon, normalized=normalized)


def build_selection(cfg):
    return SelectionConfig(epsilon=cfg["epsilon"])


def dump_resolved(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True, default_flow_style=None)
