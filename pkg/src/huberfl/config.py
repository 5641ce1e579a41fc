"""Flat ``key = value`` experiment configuration files.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union

from .adversary import CLI_NAMES
from .aggregation import AGGREGATORS
from .errors import HuberFLError


class ConfigError(HuberFLError, ValueError):
    pass


class ConfigFileNotFound(ConfigError):
    pass


class ConfigSyntaxError(ConfigError):
    pass


class UnknownKeyError(ConfigError):
    pass


class MissingKeyError(ConfigError):
    pass


class InvalidValueError(ConfigError):
    pass


TASKS = ("regression", "classifier")
ALLOCATIONS = ("balanced", "stick")
DATA_SOURCES = ("blobs", "mnist")
PROJECTIONS = ("none", "ball")


@dataclass
class ExperimentConfig:
    task: str
    seed: int
    m: int
    rounds: int
    eta: float
    aggregator: str
    attack: str
    eps: float
    output: str
    allocation: str = "balanced"
    # regression data
    d: int = 50
    n_train: int = 10000
    n_test: int = 2000
    noise_std: float = 1.0
    sigma_param: float = 0.0
    # classifier data
    data: str = "blobs"
    classes: int = 10
    features: int = 64
    spread: float = 0.75
    hidden: int = 32
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    # aggregator parameters
    threshold: Optional[float] = None
    t0: Optional[float] = None
    bigm: Optional[float] = None
    q: Union[int, str, None] = None
    trim: Union[float, str, None] = None
    tol: Optional[float] = None
    max_iters: int = 10000
    # projection and output
    projection: str = "none"
    proj_radius: float = 1.0
    timing: bool = False

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


REQUIRED = tuple(f.name for f in fields(ExperimentConfig) if f.default is dataclasses.MISSING)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _int_or_auto(text):
    return "auto" if text == "auto" else int(text)


def _float_or_auto(text):
    return "auto" if text == "auto" else float(text)


PARSERS = {
    "task": _choice(TASKS),
    "seed": int,
    "m": int,
    "rounds": int,
    "eta": float,
    "aggregator": _choice(AGGREGATORS),
    "attack": _choice(tuple(CLI_NAMES)),
    "eps": float,
    "output": str,
    "allocation": _choice(ALLOCATIONS),
    "d": int,
    "n_train": int,
    "n_test": int,
    "noise_std": float,
    "sigma_param": float,
    "data": _choice(DATA_SOURCES),
    "classes": int,
    "features": int,
    "spread": float,
    "hidden": int,
    "train_images": str,
    "train_labels": str,
    "test_images": str,
    "test_labels": str,
    "threshold": float,
    "t0": float,
    "bigm": float,
    "q": _int_or_auto,
    "trim": _float_or_auto,
    "tol": float,
    "max_iters": int,
    "projection": _choice(PROJECTIONS),
    "proj_radius": float,
    "timing": _parse_bool,
}

assert set(PARSERS) == {f.name for f in fields(ExperimentConfig)}

# key -> (predicate, human-readable constraint)
RANGES = {
    "seed": (lambda v: v >= 0, "must be >= 0"),
    "m": (lambda v: v >= 1, "must be >= 1"),
    "rounds": (lambda v: v >= 0, "must be >= 0"),
    "eta": (lambda v: v > 0, "must be > 0"),
    "eps": (lambda v: 0 <= v < 0.5, "must satisfy 0 <= eps < 0.5"),
    "d": (lambda v: v >= 1, "must be >= 1"),
    "n_train": (lambda v: v >= 1, "must be >= 1"),
    "n_test": (lambda v: v >= 1, "must be >= 1"),
    "noise_std": (lambda v: v >= 0, "must be >= 0"),
    "sigma_param": (lambda v: v >= 0, "must be >= 0"),
    "classes": (lambda v: v >= 2, "must be >= 2"),
    "features": (lambda v: v >= 1, "must be >= 1"),
    "spread": (lambda v: v >= 0, "must be >= 0"),
    "hidden": (lambda v: v >= 1, "must be >= 1"),
    "threshold": (lambda v: v > 0, "must be > 0"),
    "t0": (lambda v: v >= 0, "must be >= 0"),
    "bigm": (lambda v: v >= 0, "must be >= 0"),
    "q": (lambda v: v == "auto" or v >= 0, "must be 'auto' or >= 0"),
    "trim": (lambda v: v == "auto" or 0 <= v < 0.5, "must be 'auto' or satisfy 0 <= trim < 0.5"),
    "tol": (lambda v: v > 0, "must be > 0"),
    "max_iters": (lambda v: v >= 1, "must be >= 1"),
    "proj_radius": (lambda v: v > 0, "must be > 0"),
}


def parse_value(key: str, text: str, where: str = ""):
    """Convert one raw value, raising :class:`InvalidValueError` with context."""
    prefix = f"{where}: " if where else ""
    if key not in PARSERS:
        raise UnknownKeyError(f"{prefix}unknown key '{key}'")
    try:
        value = PARSERS[key](text)
    except ValueError as exc:
        reason = str(exc) if key not in _NUMERIC else f"expected {_NUMERIC[key]}"
        raise InvalidValueError(f"{prefix}invalid value for {key}: {text!r} ({reason})") from None
    if key in RANGES:
        ok, reason = RANGES[key]
        if not ok(value):
            raise InvalidValueError(f"{prefix}invalid value for {key}: {text!r} ({reason})")
    return value


_NUMERIC = {k: ("an integer" if p is int else "a number") for k, p in PARSERS.items() if p in (int, float)}
_NUMERIC["q"] = "an integer or 'auto'"
_NUMERIC["trim"] = "a number or 'auto'"


def _dependent_missing(values: dict) -> list[str]:
    missing = []
    agg = values.get("aggregator")
    needs_threshold = agg == "huber" or values.get("attack") == "hlma"
    if needs_threshold and values.get("threshold") is None:
        if values.get("t0") is None or values.get("bigm") is None:
            missing.append("threshold (or t0 and bigm)")
    if agg in ("krum", "gmm") and values.get("q") is None:
        missing.append("q")
    if agg == "cwtm" and values.get("trim") is None:
        missing.append("trim")
    if values.get("task") == "classifier" and values.get("data") == "mnist":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if values.get(key) is None:
                missing.append(key)
    return missing


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigSyntaxError(f"{where}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigSyntaxError(f"{where}: missing key before '='")
        if key not in PARSERS:
            raise UnknownKeyError(f"{where}: unknown key '{key}'")
        if key in values:
            raise ConfigSyntaxError(f"{where}: duplicate key '{key}'")
        values[key] = parse_value(key, value, where)

    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise MissingKeyError(f"{source}: missing required key(s): {', '.join(missing)}")
    dependent = _dependent_missing({**_defaults(), **values})
    if dependent:
        detail = f"aggregator {values['aggregator']}, attack {values['attack']}"
        raise MissingKeyError(f"{source}: missing required key(s) for {detail}: {', '.join(dependent)}")
    return ExperimentConfig(**values)


def _defaults() -> dict:
    return {f.name: f.default for f in fields(ExperimentConfig) if f.default is not dataclasses.MISSING}


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigFileNotFound(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(config: ExperimentConfig) -> str:
    """Serialize every non-empty field; ``parse_config_text`` inverts this."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        lines.append(f"{f.name} = {_format(value)}")
    return "\n".join(lines) + "\n"


def config_with_override(config: ExperimentConfig, key: str, text: str) -> ExperimentConfig:
    """Copy of ``config`` with one key set from its textual value, revalidated."""
    updated = config.replace(**{key: parse_value(key, text, "<override>")})
    return parse_config_text(config_to_text(updated), "<override>")
