"""JSON experiment configs: load, check against the bundled schema, merge with flags."""

import json
from importlib import resources

from .errors import UsageError

SCHEMA_VERSION = 1


def schema():
    return json.loads(resources.files(__package__).joinpath("schema/config.schema.json").read_text())


_TYPES = {"number": (int, float), "integer": (int,), "string": (str,), "boolean": (bool,),
          "array": (list,)}


def _check(value, spec, where):
    kind = spec.get("type")
    if kind is None:
        return
    ok = isinstance(value, _TYPES[kind]) and not (kind in ("number", "integer") and isinstance(value, bool))
    if not ok:
        raise UsageError(f"{where}: expected {kind}, got {type(value).__name__}")
    if "enum" in spec and value not in spec["enum"]:
        raise UsageError(f"{where}: must be one of {spec['enum']}")
    if "minimum" in spec and value < spec["minimum"]:
        raise UsageError(f"{where}: must be >= {spec['minimum']}")
    if kind == "array" and "items" in spec:
        for i, item in enumerate(value):
            _check(item, spec["items"], f"{where}[{i}]")


def validate(config, command):
    if not isinstance(config, dict):
        raise UsageError("config must be a JSON object")
    if config.get("schema_version") != SCHEMA_VERSION:
        raise UsageError(f"config schema_version must be {SCHEMA_VERSION}")
    if config.get("command", command) != command:
        raise UsageError(f"config is for {config['command']!r}, not {command!r}")
    options = config.get("options", {})
    known = schema()["properties"]["options"]["properties"]
    for key, value in options.items():
        if key not in known:
            raise UsageError(f"unknown config option {key!r}")
        _check(value, known[key], key)
    return {key.replace("-", "_"): value for key, value in options.items()}


def load(path, command):
    try:
        with open(path) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return validate(config, command)
