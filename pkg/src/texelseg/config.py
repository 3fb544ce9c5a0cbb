"""Pipeline configuration with an INI-style text serialization."""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, fields

from .errors import ConfigError

SECTION = "texelseg"


@dataclass
class PipelineConfig:
    scale: float = 0.04  # fraction of the largest bounding-box side
    orientation: str = "positive"
    otsu_bins: int = 256
    merge_tau: float = 0.5
    min_seed_depth: float = 0.1  # fraction of the scale
    neighbor_rank: int = 7
    k_max: int = 15
    cost_tolerance: float = 0.01
    zscore_features: bool = False
    n_select: int = 5
    dictionary: str = ""  # empty = bundled dictionary
    output_dir: str = "."
    seed: int = 0
    workers: int = 0  # 0 = all available cores

    def validate(self) -> "PipelineConfig":
        if not 0.0 < self.scale < 1.0:
            raise ConfigError(f"scale must lie in (0, 1), got {self.scale}")
        if self.orientation not in ("positive", "negative"):
            raise ConfigError(f"orientation must be positive or negative, got {self.orientation!r}")
        if self.otsu_bins < 2:
            raise ConfigError("otsu_bins must be >= 2")
        if not 0.0 <= self.merge_tau <= 1.0:
            raise ConfigError("merge_tau must lie in [0, 1]")
        if self.min_seed_depth < 0:
            raise ConfigError("min_seed_depth must be >= 0")
        if self.neighbor_rank < 1:
            raise ConfigError("neighbor_rank must be >= 1")
        if self.k_max < 2:
            raise ConfigError("k_max must be >= 2")
        if self.cost_tolerance < 0:
            raise ConfigError("cost_tolerance must be >= 0")
        if self.n_select < 1:
            raise ConfigError("n_select must be >= 1")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        return self

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        parser = configparser.ConfigParser()
        parser[SECTION] = {f.name: _dump(getattr(self, f.name)) for f in fields(self)}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        if not parser.has_section(SECTION):
            return cls()
        return cls().updated(dict(parser[SECTION]))

    def updated(self, values: dict) -> "PipelineConfig":
        """Copy with string or typed overrides applied and checked."""
        known = {f.name: f for f in fields(self)}
        changes = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                continue
            changes[key] = _parse(known[key].type, raw, key)
        return dataclasses.replace(self, **changes)


def _dump(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(typ, raw, key):
    if not isinstance(raw, str):
        return raw
    try:
        if typ in (bool, "bool"):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw
