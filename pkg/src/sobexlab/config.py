"""Run configuration: defaults, validation and canonical JSON form."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict
from pathlib import Path

from .fields import SMOOTH_FAMILY
from .quadrature import QuadratureSpec


class ConfigError(ValueError):
    pass


DOMAIN_DEFAULTS = {
    "mushroom": {"n": 3, "p": 5.0, "q": 1.0, "m": 12},
    "comb": {"n": 3, "kmax": 12, "aspect_shrink": False, "p": 1.5, "q": 1.0},
    "cusp": {"n": 3, "psi": 2.0},
}

EXPERIMENT_NAMES = ("homog", "opnorm", "rate6", "rate7")


def default_config() -> dict:
    return {
        "domain": {"type": "mushroom", **DOMAIN_DEFAULTS["mushroom"]},
        "quadrature": asdict(QuadratureSpec()),
        "experiment": {
            "name": "rate7",
            "fields": list(SMOOTH_FAMILY),
            "mlist": [8, 12],
            "kmax": 11,
            "window": [3, 10],
        },
        "output": {"json": None, "csv": None},
    }


def _coerce(value, default, where: str):
    if default is None:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{where} must be a string or null")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        if default and isinstance(default[0], str):
            return [_coerce(v, "", where) for v in value]
        return [_coerce(v, 0, where) for v in value]
    raise ConfigError(f"unsupported setting {where}")


def _merge_block(name: str, given: dict, defaults: dict) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"block {name!r} must be an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        out[key] = _coerce(value, defaults[key], f"{name}.{key}")
    return out


def resolve(data: dict) -> dict:
    """Merge a partial config over the defaults, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    base = default_config()
    unknown = sorted(set(data) - set(base))
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    dom = dict(data.get("domain", {}))
    dtype = dom.pop("type", base["domain"]["type"]) if "type" in dom else "mushroom"
    if dtype not in DOMAIN_DEFAULTS:
        raise ConfigError(f"domain.type must be one of {sorted(DOMAIN_DEFAULTS)}")
    out = {
        "domain": {"type": dtype, **_merge_block("domain", dom, DOMAIN_DEFAULTS[dtype])},
        "quadrature": _merge_block("quadrature", data.get("quadrature", {}), base["quadrature"]),
        "experiment": _merge_block("experiment", data.get("experiment", {}), base["experiment"]),
        "output": _merge_block("output", data.get("output", {}), base["output"]),
    }
    if out["experiment"]["name"] not in EXPERIMENT_NAMES:
        raise ConfigError(f"experiment.name must be one of {EXPERIMENT_NAMES}")
    try:
        QuadratureSpec(**out["quadrature"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"quadrature: {exc}") from None
    return out


def dumps(config: dict) -> str:
    """Canonical text form; ``dumps(parse(dumps(c))) == dumps(c)``."""
    return json.dumps(config, indent=2, sort_keys=True) + "\n"


def parse(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return resolve(data)


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse(text)


def quad_spec(config: dict) -> QuadratureSpec:
    return QuadratureSpec(**config["quadrature"])
