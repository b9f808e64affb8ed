"""Plain-text config files: one `section.key = value` per line."""

from __future__ import annotations

from typing import Dict

from .errors import ConfigError


def load_config(path: str) -> Dict[str, str]:
    """Parse a key=value file into a flat dict of dotted keys.

    Blank lines and lines starting with # are skipped.  Keys must be
    dotted (section.name); duplicates are rejected so the resolved
    configuration is unambiguous.
    """
    out: Dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key or "." not in key:
                raise ConfigError(f"{path}:{lineno}: keys must be dotted, got {key!r}")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def parse_bool(value: str) -> bool:
    low = value.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")
