"""Run configuration: flat ``section.key = value`` files with environment overrides."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .ensemble import CommitteeConfig
from .feature_select import SelectionConfig
from .stream_tree import HatConfig

ENV_PREFIX = "STREAMIDS_"
MODES = ("single", "concurrent")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SequenceConfig:
    hidden_dim: int = 32
    seq_len: int = 8
    learning_rate: float = 0.01
    epochs: int = 5
    batch_size: int = 1
    warmup_size: int = 2000
    # records after which warm-up training goes ahead with whatever was collected
    warmup_horizon: int = 8000
    refresh_every: int = 50000

    def __post_init__(self):
        if min(self.hidden_dim, self.seq_len, self.epochs, self.batch_size, self.warmup_size) < 1:
            raise ValueError("stage3 sizes must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass(frozen=True)
class PipelineConfig:
    stage1: HatConfig = field(default_factory=HatConfig)
    stage2: HatConfig = field(default_factory=HatConfig)
    stage3: SequenceConfig = field(default_factory=SequenceConfig)
    stage4: CommitteeConfig = field(default_factory=CommitteeConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    warmup: int = 500
    normalize: bool = True
    seed: int = 0
    mode: str = "single"
    queue_size: int = 256

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.warmup < 1 or self.queue_size < 1:
            raise ValueError("warmup and queue_size must be positive")

    def to_lines(self) -> list[str]:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                lines.extend(f"{f.name}.{g.name} = {getattr(value, g.name)}" for g in dataclasses.fields(value))
            else:
                lines.append(f"{f.name} = {value}")
        return lines


SECTIONS = ("stage1", "stage2", "stage3", "stage4", "selection")


def _coerce(raw: str, like):
    if isinstance(like, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw.strip()


def build_config(values: Mapping[str, str], base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Apply dotted ``key -> text`` overrides on top of ``base``."""
    base = base or PipelineConfig()
    top: dict = {}
    nested: dict = {s: {} for s in SECTIONS}
    for key, raw in values.items():
        section, _, name = key.partition(".")
        if name:
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section {section!r}")
            target = getattr(base, section)
            if name not in {f.name for f in dataclasses.fields(target)}:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                nested[section][name] = _coerce(raw, getattr(target, name))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        else:
            if section not in {f.name for f in dataclasses.fields(base)} or section in SECTIONS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                top[section] = _coerce(raw, getattr(base, section))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
    try:
        for section, kw in nested.items():
            if kw:
                top[section] = dataclasses.replace(getattr(base, section), **kw)
        return dataclasses.replace(base, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def env_overrides(environ: Mapping[str, str] = os.environ) -> dict[str, str]:
    """``STREAMIDS_STAGE1__DELTA=1e-6`` overrides ``stage1.delta``."""
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out[key] = value
    return out


def load_config(path=None, environ: Mapping[str, str] = os.environ) -> PipelineConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    values.update(env_overrides(environ))
    return build_config(values)
