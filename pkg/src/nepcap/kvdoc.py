"""Flat ``key = value`` documents used for configs, reports and run records."""

from pathlib import Path

from .errors import ConfigError


def parse_kv(text, source="<string>"):
    """Parse ``key = value`` lines; ``#`` starts a comment line, blank lines are skipped."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {line!r}")
        out[key] = value.strip()
    return out


def format_kv(values):
    lines = []
    for k, v in values.items():
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def read_kv(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_kv(text, str(path))


def write_kv(values, path):
    Path(path).write_text(format_kv(values), encoding="utf-8")
