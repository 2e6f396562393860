"""Flow configuration files.

Grammar of the text format: one ``key = value`` per line, ``#`` starts a
comment, blank lines are ignored, keys are the ``FlowConfig`` field names.
A file whose first non-blank character is ``{`` is read as JSON with the
same keys.

    geometry = ellipse:a=2,b=1
    psi = neg_power:alpha=1   # inverse curvature flow
    t_max = 1.0
    n = 512
"""

import hashlib
import json
import math
from dataclasses import fields

from .flow import ConfigError, FlowConfig

_FIELDS = {f.name: f for f in fields(FlowConfig)}


def _coerce(key, raw):
    kind = _FIELDS[key].type
    if kind in (float, "float"):
        try:
            return math.inf if str(raw).strip().lower() in ("inf", "infinity") else float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if kind in (int, "int"):
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        if not value.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(value)
    return str(raw).strip()


def parse_config_text(text):
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            items = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
        if not isinstance(items, dict):
            raise ConfigError("JSON config must be an object")
    else:
        items = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            key, eq, value = body.partition("=")
            if not eq or not key.strip():
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key = key.strip()
            if key in items:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            items[key] = value.strip()
    unknown = sorted(set(items) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return FlowConfig(**{k: _coerce(k, v) for k, v in items.items()})


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    return parse_config_text(text)


def config_digest(cfg):
    """sha256 of the canonical JSON form of the resolved configuration."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()
