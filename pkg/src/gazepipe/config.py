"""Flat ``key = value`` configuration files with ``#`` comments."""

from __future__ import annotations

from .errors import ConfigError

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


def parse_kv(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines. Later duplicates are an error."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read(), str(path))


def as_bool(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in TRUE_WORDS:
        return True
    if v in FALSE_WORDS:
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def as_int(key: str, value: str) -> int:
    try:
        return int(value, 0)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def as_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def as_list(value: str) -> tuple:
    return tuple(item.strip() for item in value.split(",") if item.strip())


def check_keys(cfg: dict, allowed, source: str = "<config>") -> None:
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"{source}: unknown keys {', '.join(unknown)}")
