"""Layered run configuration: defaults < ``key=value`` file < command-line flags."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .framehash import check_grid
from .keyframes import SelectionParams
from .matcher import MatchParams


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    blank_std: float = 4.0
    keyframe_threshold: int = 16
    resolution: int = 64
    block_grid: int = 8
    hash_threshold: int = 8
    drop_threshold: int = 5
    drop_rounding: str = "half_up"
    public_key: str | None = None
    private_key: str | None = None
    seed: int = 0
    threads: int = 1

    def validate(self) -> "Config":
        try:
            check_grid(self.resolution, self.block_grid)
            self.selection_params()
            self.match_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        return self

    def selection_params(self) -> SelectionParams:
        return SelectionParams(self.blank_std, self.keyframe_threshold, self.resolution, self.block_grid)

    def match_params(self) -> MatchParams:
        return MatchParams(self.hash_threshold, self.drop_threshold, self.drop_rounding)

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(name: str, raw: str):
    kind = {f.name: f.type for f in fields(Config)}[name]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def read_config_file(path: str | Path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(Config)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def build_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    cfg = Config()
    layers = [read_config_file(path) if path else {}, overrides or {}]
    for layer in layers:
        for key, value in layer.items():
            if value is not None:
                setattr(cfg, key, value)
    return cfg.validate()
