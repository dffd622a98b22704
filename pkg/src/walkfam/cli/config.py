"""Experiment configs: YAML in, validated dict plus family objects out.

A config describes one family (base law, dimension, members) and the
parameters of the commands that will run against it.  Validation happens
before any simulation; the canonical hash of the effective config (seed
resolved, overrides applied) is stamped into every output so runs can be
matched to their inputs byte for byte.
"""

import hashlib
import json
import secrets
from fractions import Fraction

import jsonschema
import yaml

from ..errors import ConfigError
from ..families import (KlebanerFamily, ScaledFamily, make_klebaner_family,
                        make_symmetric_family, truncated_normal_base,
                        two_point_base, uniform_base, uniform_lattice_base)
from ..families import BaseDistribution, as_fraction

__all__ = [
    "CONFIG_SCHEMA",
    "load_config",
    "validate_config",
    "canonical_hash",
    "build_family",
    "build_base",
    "parse_fraction",
    "resolve_seed",
]

_NUMBER = {"type": ["number", "string"]}   # strings allow exact fractions

_BASE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["lattice", "two_point", "uniform_lattice",
                          "uniform", "truncated_normal"]},
        "pmf": {"type": "array",
                "items": {"type": "array", "minItems": 2, "maxItems": 2,
                          "items": _NUMBER}},
        "value": _NUMBER,
        "k": {"type": "integer", "minimum": 1},
        "span": _NUMBER,
        "include_zero": {"type": "boolean"},
        "halfwidth": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "cutoff": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "family": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["scaled", "klebaner", "symmetric"]},
                "base": _BASE_SCHEMA,
                "dimension": {"type": "integer", "minimum": 1, "maximum": 16},
                "members": {"type": "array",
                            "items": {"type": "array", "items": _NUMBER,
                                      "minItems": 1}},
                "alpha_star": {"type": "number"},
                "c": {"type": "number", "exclusiveMinimum": 0},
                "alphas": {"type": "array", "items": _NUMBER, "minItems": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "simulate": {
            "type": "object",
            "properties": {
                "engine": {"enum": ["walk", "queue"]},
                "horizon": {"type": "integer", "minimum": 1,
                            "maximum": 10_000_000},
                "n_paths": {"type": "integer", "minimum": 1,
                            "maximum": 100_000_000},
                "member": {"type": "array", "items": _NUMBER},
                "reflected": {"type": "boolean"},
                "strict": {"type": "boolean"},
            },
            "required": ["engine", "horizon", "n_paths"],
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "properties": {
                "check": {"enum": ["property1", "property2", "weak-semi",
                                   "tail-crossing", "index", "nd-oracle"]},
                "member": {"type": "array", "items": _NUMBER},
                "members": {"type": "array",
                            "items": {"type": "array", "items": _NUMBER}},
                "max_level": {"type": "integer", "minimum": 1,
                              "maximum": 10_000},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["exact", "monte-carlo"]},
                "z_grid": {"type": "array",
                           "items": {"type": "number", "exclusiveMinimum": 0}},
                "horizon": {"type": "integer", "minimum": 2,
                            "maximum": 10_000_000},
                "n_paths": {"type": "integer", "minimum": 1,
                            "maximum": 100_000_000},
                "sigma_mult": {"type": "number", "exclusiveMinimum": 0},
                "extend": {"type": "boolean"},
                "ties": {"enum": ["strict", "half"]},
                "pmf": {"type": "array",
                        "items": {"type": "array", "minItems": 2,
                                  "maxItems": 2, "items": _NUMBER}},
                "s_grid": {"type": "array",
                           "items": {"type": "number",
                                     "exclusiveMinimum": 0}},
                "mode": {"type": "string"},
                "levels": {"type": "array", "items": {"type": "integer",
                                                      "minimum": 1}},
                "n_formula": {"type": "integer", "minimum": 1},
                "expect_psi": {"type": "number"},
                "debias": {"type": "boolean"},
            },
            "required": ["check"],
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
    },
    "required": ["family"],
    "additionalProperties": False,
}


def validate_config(cfg):
    """Raise ConfigError with a field path when the config is malformed."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "(top level)"
        raise ConfigError(f"config field {path}: {e.message}") from e
    return cfg


def load_config(path):
    """Read and validate a YAML config file."""
    try:
        with open(path, encoding="utf-8") as f:
            cfg = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" \
            if mark else ""
        raise ConfigError(f"config {path} is not valid YAML{where}: "
                          f"{getattr(e, 'problem', e)}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return validate_config(cfg)


def canonical_hash(cfg):
    """sha256 over the canonical JSON form of the effective config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True)
    return hashlib.sha256(blob.encode("ascii")).hexdigest()


def resolve_seed(cfg, override=None):
    """Effective master seed: CLI override, config value, or fresh entropy.

    A generated seed is written back into the config dict so the recorded
    hash pins it.
    """
    if override is not None:
        cfg["seed"] = int(override)
    elif "seed" not in cfg:
        cfg["seed"] = secrets.randbits(48)
    return cfg["seed"]


def parse_fraction(v):
    # YAML numbers arrive as int/float, exact rationals as "3/20" strings
    try:
        return as_fraction(Fraction(v) if isinstance(v, str) else v)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"cannot parse rational value {v!r}") from e


def build_base(spec):
    """Base law object from the ``family.base`` section."""
    kind = spec["kind"]
    if kind == "lattice":
        if "pmf" not in spec:
            raise ConfigError("lattice base needs a pmf")
        pmf = {parse_fraction(v): parse_fraction(p) for v, p in spec["pmf"]}
        span = parse_fraction(spec["span"]) if "span" in spec else None
        return BaseDistribution.lattice(pmf, span=span)
    if kind == "two_point":
        return two_point_base(parse_fraction(spec.get("value", 1)))
    if kind == "uniform_lattice":
        return uniform_lattice_base(spec.get("k", 1),
                                    span=parse_fraction(spec.get("span", 1)),
                                    include_zero=spec.get("include_zero",
                                                          True))
    if kind == "uniform":
        return uniform_base(spec.get("halfwidth", 1.0))
    if kind == "truncated_normal":
        return truncated_normal_base(spec.get("sigma", 1.0),
                                     spec.get("cutoff", 3.0))
    raise ConfigError(f"unknown base kind {kind!r}")


def build_family(cfg):
    """Family object from the ``family`` section."""
    fam = cfg["family"]
    kind = fam["kind"]
    if kind == "scaled":
        if "base" not in fam or "dimension" not in fam:
            raise ConfigError("scaled family needs base and dimension")
        return ScaledFamily(base=build_base(fam["base"]),
                            dimension=fam["dimension"])
    if kind == "klebaner":
        if "alpha_star" not in fam:
            raise ConfigError("klebaner family needs alpha_star")
        return make_klebaner_family(fam["alpha_star"], c=fam.get("c", 0.5))
    if kind == "symmetric":
        if "alphas" not in fam:
            raise ConfigError("symmetric family needs alphas")
        return make_symmetric_family([parse_fraction(x) for x in fam["alphas"]])
    raise ConfigError(f"unknown family kind {kind!r}")


def family_members(cfg):
    """Member vectors declared in the config, as Fraction tuples."""
    fam = cfg["family"]
    return [tuple(parse_fraction(x) for x in row)
            for row in fam.get("members", [])]


def is_walk_family(family):
    return isinstance(family, (ScaledFamily,))


def is_level_family(family):
    return isinstance(family, KlebanerFamily)
