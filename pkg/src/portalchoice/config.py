"""Run configuration shared by every CLI stage.

Config files are plain ``key = value`` lines; ``#`` starts a comment.
Command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    top_j: int = 15
    reference: Optional[str] = None
    window_seconds: int = 300
    max_iterations: int = 100
    grad_tol: float = 1e-6
    loglik_tol: float = 1e-9
    max_halvings: int = 20
    beta_bound: float = 20.0
    min_occasions_margin: int = 2
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.top_j < 2:
            raise ConfigError(f"top_j must be >= 2, got {self.top_j}")
        if self.window_seconds <= 0:
            raise ConfigError("window_seconds must be positive")
        if self.max_iterations < 1 or self.max_halvings < 0:
            raise ConfigError("max_iterations must be >= 1 and max_halvings >= 0")
        if self.grad_tol <= 0 or self.loglik_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.beta_bound <= 0:
            raise ConfigError("beta_bound must be positive")
        if self.min_occasions_margin < 0:
            raise ConfigError("min_occasions_margin must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def replace(self, **changes: Any) -> "Config":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


def read_keyvalue(path: str | Path) -> dict[str, str]:
    """Parse a ``key = value`` file into raw strings, rejecting duplicates."""
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip('"').strip("'")
    return out


def coerce_fields(cls, raw: dict[str, str], source: str = "config") -> dict[str, Any]:
    """Convert raw strings to the types declared on dataclass ``cls``."""
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
    out: dict[str, Any] = {}
    for key, value in raw.items():
        default = known[key].default
        kind = type(default) if default is not None else str
        try:
            if kind is bool:
                out[key] = value.lower() in ("1", "true", "yes", "on")
            elif kind is int:
                out[key] = int(value)
            elif kind is float:
                out[key] = float(value)
            else:
                out[key] = value or None
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key}: {value!r}") from exc
    return out


def load_config(path: Optional[str | Path] = None) -> Config:
    if path is None:
        return Config()
    raw = read_keyvalue(path)
    return Config(**coerce_fields(Config, raw, source=str(path)))
