"""
Experiment configuration: JSON files loaded into the config dataclasses.

Unknown keys and wrongly typed values are rejected with the dotted key
path, so a typo in a grid never runs silently with defaults.
"""

import dataclasses
import hashlib
import json
import logging
import os
import typing
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Union

from app.errors import ConfigNotFound, ConfigTypeError, ParseError, UnknownKey
from app.models.config import ExperimentConfig
from app.utils.export import ensure_directory

logger = logging.getLogger(__name__)

HASH_EXCLUDED = ("config_hash",)


def _coerce(value: Any, tp: Any, path: str) -> Any:
    """Check a decoded JSON value against a field annotation and convert it."""
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)

    if origin is Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if origin in (list, typing.List):
        if not isinstance(value, list):
            raise ConfigTypeError(path, "list", value)
        item_type = args[0] if args else Any
        return [_coerce(v, item_type, f"{path}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigTypeError(path, "object", value)
        return _build(tp, value, path)
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(value)
        except ValueError:
            raise ConfigTypeError(path, "one of " + ", ".join(m.value for m in tp), value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigTypeError(path, "bool", value)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigTypeError(path, "int", value)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigTypeError(path, "float", value)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigTypeError(path, "str", value)
        return value
    return value


def _build(cls: type, data: Dict[str, Any], prefix: str = "") -> Any:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in names:
            raise UnknownKey(path)
        kwargs[key] = _coerce(value, hints[key], path)
    try:
        return cls(**kwargs)
    except ValueError as e:
        logger.error(f"Invalid {prefix or 'top-level'} config: {e}")
        raise ConfigTypeError(prefix or cls.__name__, f"valid values ({e})", data) from e


def parse_override(item: str):
    """Split "a.b=value"; the value is parsed as JSON, falling back to a plain string."""
    if "=" not in item:
        raise ValueError(f"override must look like key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    data = json.loads(json.dumps(data))
    for item in overrides:
        key, value = parse_override(item)
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigTypeError(key, "object", node)
        node[parts[-1]] = value
    return data


def config_to_dict(config: Any) -> Dict[str, Any]:
    """Plain JSON-ready dict of a config dataclass."""
    def convert(value):
        if isinstance(value, Enum):
            return value.value
        if isinstance(value, dict):
            return {k: convert(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [convert(v) for v in value]
        return value
    return convert(dataclasses.asdict(config))


def config_hash(config: ExperimentConfig) -> str:
    """sha256 over the canonical JSON of the config, hash field excluded."""
    data = config_to_dict(config)
    for key in HASH_EXCLUDED:
        data.pop(key, None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def config_from_dict(data: Dict[str, Any], overrides: Iterable[str] = ()) -> ExperimentConfig:
    data = apply_overrides(data, overrides)
    config = _build(ExperimentConfig, data)
    config.config_hash = config_hash(config)
    return config


def load_config(path: Union[str, Path, None] = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """
    Load and validate an experiment config.

    Args:
        path: JSON config file; None means all defaults
        overrides: "key.path=value" strings applied before validation

    Raises:
        ConfigNotFound: the file does not exist
        UnknownKey: a key the config schema does not define
        ConfigTypeError: a value of the wrong type, with its key path
    """
    data: Dict[str, Any] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigNotFound(str(path))
        with open(path, "r") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ParseError(f"Invalid JSON in config {path}", line=e.lineno, path=str(path)) from e
        if not isinstance(data, dict):
            raise ConfigTypeError(str(path), "object", data)
    config = config_from_dict(data, overrides)
    logger.debug(f"Loaded config {path or '<defaults>'} with hash {config.config_hash}")
    return config


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    ensure_directory(path)
    data = config_to_dict(config)
    data.pop("config_hash", None)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return Path(path)

