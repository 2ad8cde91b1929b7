"""Flat ``key = value`` run configuration files.

Lines are ``key = value`` pairs, ``#`` starts a comment, blank lines are
ignored. ``kind`` (``dam`` or ``nls``) selects the schema; every other key
must be a field of that schema.
"""

from __future__ import annotations

import dataclasses
import hashlib
from importlib import resources
from pathlib import Path

from .dam import DamConfig
from .nls import NlsConfig


class ConfigError(ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


SCHEMAS = {"dam": DamConfig, "nls": NlsConfig}

# everything else in DamConfig has a default: the time-step controls and
# output/diagnostic knobs
DAM_REQUIRED = ("omega_min", "omega_max", "n_points", "omega0", "sigma0", "t_end")


def _coerce(value: str, typ, key, line):
    typ = str(typ)
    try:
        if "int" in typ and "float" not in typ:
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        if value.lower() == "none" and "None" in typ:
            return None
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {typ}", line, key) from None


def parse_text(text: str):
    pairs, lines = {}, {}
    for no, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", no)
        key, value = (p.strip() for p in body.split("=", 1))
        if not key or not value:
            raise ConfigError("empty key or value", no)
        if key in pairs:
            raise ConfigError(f"duplicate key {key!r}", no, key)
        pairs[key], lines[key] = value, no
    kind = pairs.pop("kind", None)
    if kind not in SCHEMAS:
        raise ConfigError("'kind' must be dam or nls", lines.get("kind"), "kind")
    cls = SCHEMAS[kind]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in pairs.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} for kind {kind}", lines[key], key)
        kwargs[key] = _coerce(value, fields[key].type, key, lines[key])
    if kind == "dam":
        missing = [k for k in DAM_REQUIRED if k not in kwargs]
        if missing:
            raise ConfigError(f"missing required key {missing[0]!r}", None, missing[0])
    try:
        return cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        name = next((k for k in fields if k in msg), None)
        raise ConfigError(f"invalid {name or kind} config: {msg}", None, name) from None


def parse_config(path):
    return parse_text(Path(path).read_text())


def dump_config(cfg) -> str:
    kind = next(k for k, c in SCHEMAS.items() if isinstance(cfg, c))
    out = [f"kind = {kind}"]
    for f in dataclasses.fields(cfg):
        out.append(f"{f.name} = {getattr(cfg, f.name)!r}")
    return "\n".join(out) + "\n"


def config_hash(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


def preset_names():
    root = resources.files("wavecool") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    name = name[:-4] if name.endswith(".cfg") else name
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}")
    return (resources.files("wavecool") / "presets" / f"{name}.cfg").read_text()


def load_preset(name: str):
    return parse_text(preset_text(name))
