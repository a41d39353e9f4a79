"""Solver hyperparameters and the flat ``key=value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError

# file key -> dataclass attribute, where the two differ
_KEY_ALIASES = {"lambda": "lam"}
_ATTR_TO_KEY = {v: k for k, v in _KEY_ALIASES.items()}


@dataclass(frozen=True)
class SolverConfig:
    """All knobs of the inference pipeline.

    Defaults follow the published Poisson-MBO settings. ``tau`` has no
    published value and defaults to 0.1. The ``lp_*`` fields belong to the
    label-propagation baseline; ``normalize`` and ``renormalize_queries``
    toggle the L2 steps around query calibration.
    """

    mu: float = 1.5
    m1: int = 20
    m2: int = 40
    m3: int = 100
    phi: float = 10.0
    clip_lo: float = 0.5
    clip_hi: float = 1.0
    knn_k: int = 30
    tp_max: int = 100
    tau: float = 0.1
    lam: float = 1.0
    seed: int = 0
    lp_alpha: float = 0.99
    lp_max_iter: int = 1000
    lp_tol: float = 1e-6
    normalize: bool = True
    renormalize_queries: bool = False

    def __post_init__(self) -> None:
        for name in ("m1", "m2", "m3", "tp_max", "knn_k", "lp_max_iter"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{_key(name)} must be >= 1, got {getattr(self, name)}")
        if not self.mu > 0:
            raise ConfigError(f"mu must be > 0, got {self.mu}")
        if not self.clip_lo < self.clip_hi:
            raise ConfigError(f"clip_lo ({self.clip_lo}) must be < clip_hi ({self.clip_hi})")
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.phi < 0:
            raise ConfigError(f"phi must be >= 0, got {self.phi}")
        if not 0 < self.lp_alpha < 1:
            raise ConfigError(f"lp_alpha must lie in (0, 1), got {self.lp_alpha}")
        if not self.lp_tol > 0:
            raise ConfigError(f"lp_tol must be > 0, got {self.lp_tol}")

    def replace(self, **changes: Any) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        """Config as a JSON-ready dict keyed by file key names."""
        return {_key(f.name): getattr(self, f.name) for f in fields(self)}

    @classmethod
    def keys(cls) -> list[str]:
        return [_key(f.name) for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values: dict[str, Any], base: "SolverConfig | None" = None) -> "SolverConfig":
        """Build a config from ``{file_key: value}``; values may be strings."""
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        changes = {}
        for key, raw in values.items():
            attr = _KEY_ALIASES.get(key, key)
            if attr not in types:
                raise ConfigError(f"unknown config key {key!r}")
            changes[attr] = _coerce(key, raw, types[attr])
        return dataclasses.replace(base, **changes)


def _key(attr: str) -> str:
    return _ATTR_TO_KEY.get(attr, attr)


def _coerce(key: str, raw: Any, type_name: str) -> Any:
    # field types are strings under `from __future__ import annotations`
    try:
        if type_name == "bool":
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if type_name == "int":
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(str(raw).strip()) if isinstance(raw, str) else int(raw)
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {type_name}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse flat ``key=value`` lines. Blank lines and ``#`` comments are skipped."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def read_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def load_config(path: str | Path) -> SolverConfig:
    values = read_config_file(path)
    known = {k: v for k, v in values.items() if k in SolverConfig.keys()}
    return SolverConfig.from_mapping(known)


def write_config(config: SolverConfig, path: str | Path) -> None:
    lines = [f"{k}={v}" for k, v in config.to_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n")
