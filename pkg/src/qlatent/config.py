"""Layered run configuration: INI file, then ``--set`` overrides.

Values resolve in three layers (defaults < config file < command-line
overrides) against a typed schema, so every run can echo one flat,
fully resolved key=value listing.  INI files may be flat key=value or
use sections, in which case keys flatten to ``section.key``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "on": True,
               "false": False, "no": False, "0": False, "off": False}


@dataclass(frozen=True)
class Field:
    """One schema entry: type, default, and optional allowed choices."""

    name: str
    kind: type
    default: object
    choices: tuple = ()
    help: str = ""


def parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {text!r}") from None


def load_config_file(path) -> dict[str, str]:
    """Raw key -> string map from an INI file.

    A file without a section header is read as one flat table; keys in
    named sections come back as ``section.key``.
    """
    text = Path(path).read_text()
    stripped = text.lstrip()
    flat = not stripped.startswith("[")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[top]\n" + text if flat else text, source=str(path))
    except configparser.Error as exc:
        raise ValueError(f"bad config file {path}: {exc}") from None
    out: dict[str, str] = {}
    for section in parser.sections():
        prefix = "" if section == "top" and flat else f"{section}."
        for key, value in parser.items(section):
            out[f"{prefix}{key}"] = value
    return out


def parse_overrides(pairs: list[str]) -> dict[str, str]:
    """``key=value`` strings from repeated ``--set`` flags."""
    out: dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"override must look like key=value: {pair!r}")
        out[key.strip()] = value.strip()
    return out


def _coerce(field: Field, text: str):
    if field.kind is bool:
        value = parse_bool(text)
    elif field.kind in (int, float):
        try:
            value = field.kind(text)
        except ValueError:
            raise ValueError(
                f"{field.name}: expected {field.kind.__name__}, "
                f"got {text!r}") from None
    else:
        value = text
    if field.choices and value not in field.choices:
        raise ValueError(
            f"{field.name}: {value!r} not in {sorted(field.choices)}")
    return value


def resolve(schema: list[Field], file_values: dict[str, str],
            overrides: dict[str, str]) -> dict:
    """Defaults, then file values, then overrides, coerced and checked."""
    by_name = {f.name: f for f in schema}
    resolved = {f.name: f.default for f in schema}
    for layer in (file_values, overrides):
        for key, text in layer.items():
            field = by_name.get(key)
            if field is None:
                known = ", ".join(sorted(by_name))
                raise ValueError(f"unknown config key {key!r} "
                                 f"(known keys: {known})")
            resolved[key] = _coerce(field, text)
    for field in schema:
        if field.choices and resolved[field.name] not in field.choices:
            raise ValueError(
                f"{field.name}: default {resolved[field.name]!r} "
                f"not in {sorted(field.choices)}")
    return resolved


def render_resolved(resolved: dict) -> str:
    """Flat ``key = value`` echo of a resolved config, sorted by key."""
    lines = [f"{key} = {resolved[key]}" for key in sorted(resolved)]
    return "\n".join(lines) + "\n"
