"""Scenario config files: ``key = value`` lines grouped under ``[section]`` headers.

Sections are only for readability; every key must name a :class:`Scenario`
field. Errors carry the file name and line number.
"""
from __future__ import annotations

from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Callable

from .engine import Scenario


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_protocols(s: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in s.split(",") if p.strip())


def _parse_optional_float(s: str) -> float | None:
    return None if s.strip().lower() in ("", "auto", "none") else float(s)


def _converters() -> dict[str, Callable[[str], Any]]:
    out: dict[str, Callable[[str], Any]] = {}
    for f in fields(Scenario):
        if f.name == "protocols":
            out[f.name] = _parse_protocols
        elif f.name == "load_sat":
            out[f.name] = _parse_optional_float
        elif isinstance(f.default, bool):
            out[f.name] = _parse_bool
        elif isinstance(f.default, int):
            out[f.name] = int
        elif isinstance(f.default, float):
            out[f.name] = float
        else:
            out[f.name] = str
    return out


CONVERTERS = _converters()


def convert(key: str, raw: str) -> Any:
    if key not in CONVERTERS:
        raise ConfigError(f"unknown key {key!r}")
    try:
        return CONVERTERS[key](raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def parse_config(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    seen_at: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"{source}:{lineno}: malformed section header {raw.strip()!r}")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key in seen_at:
            raise ConfigError(f"{source}:{lineno}: key {key!r} already set on line {seen_at[key]}")
        try:
            values[key] = convert(key, val)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
        seen_at[key] = lineno
    return values


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> Scenario:
    """Scenario from defaults, then the file, then ``overrides``; validated."""
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
        values.update(parse_config(text, str(p)))
    values.update(overrides or {})
    sc = replace(Scenario(), **values)
    try:
        sc.validate()
    except ValueError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None
    return sc


def dump_config(sc: Scenario) -> str:
    lines = ["[scenario]"]
    for f in fields(Scenario):
        v = getattr(sc, f.name)
        if f.name == "protocols":
            v = ",".join(v)
        elif v is None:
            v = "auto"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
