"""Flat ``key = value`` pipeline configuration with ``#`` comments.

Keys are dotted (``rig.focal_length``, ``train.max_epochs``, ...). Command
line flags are merged on top of file values before objects are built.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .augment import AugmentGrid
from .detection import GREEN_BAND, ORANGE_BAND, ColorBand
from .errors import ConfigError
from .geometry import CameraRig
from .nn import TrainConfig
from .synth import SynthParams


@dataclass
class PipelineConfig:
    rig: CameraRig = field(default_factory=CameraRig)
    orange_band: ColorBand = ORANGE_BAND
    green_band: ColorBand = GREEN_BAND
    synth: SynthParams = field(default_factory=SynthParams)
    signers: int = 8
    genuine: int = 25
    forgeries: int = 12
    seed: int = 0
    length: int = 512
    grid: AugmentGrid = field(default_factory=AugmentGrid)
    train: TrainConfig = field(default_factory=TrainConfig)


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def _numbers(text, kind=float):
    return tuple(kind(v) for v in text.split(","))


def _typed_fields(obj, prefix, values, used):
    updates = {}
    for f in fields(obj):
        key = f"{prefix}.{f.name}"
        if key not in values:
            continue
        used.add(key)
        current = getattr(obj, f.name)
        raw = values[key]
        if isinstance(current, tuple):
            if current and isinstance(current[0], str):
                updates[f.name] = tuple(v.strip() for v in raw.split(","))
            else:
                updates[f.name] = _numbers(raw)
        elif current is None or f.name == "patience":
            updates[f.name] = None if raw.lower() == "none" else int(raw)
        else:
            updates[f.name] = type(current)(raw)
    return replace(obj, **updates) if updates else obj


def build_config(values: dict[str, str]) -> PipelineConfig:
    cfg = PipelineConfig()
    used: set[str] = set()
    try:
        cfg.rig = _typed_fields(cfg.rig, "rig", values, used)
        cfg.synth = _typed_fields(cfg.synth, "synth", values, used)
        cfg.train = _typed_fields(cfg.train, "train", values, used)
        grid_keys = {"augment.angles": "angles_deg", "augment.scales": "scale_factors",
                     "augment.planes": "scale_planes"}
        grid_values = {f"augment.{v}": values[k] for k, v in grid_keys.items() if k in values}
        cfg.grid = _typed_fields(cfg.grid, "augment", grid_values, set())
        used.update(k for k in grid_keys if k in values)
        for name in ("orange", "green"):
            lo, hi = f"band.{name}.low", f"band.{name}.high"
            if lo in values or hi in values:
                band = getattr(cfg, f"{name}_band")
                band = ColorBand(_numbers(values[lo], int) if lo in values else band.low,
                                 _numbers(values[hi], int) if hi in values else band.high)
                setattr(cfg, f"{name}_band", band)
                used.update(k for k in (lo, hi) if k in values)
        for name in ("signers", "genuine", "forgeries", "seed", "length"):
            if name in values:
                setattr(cfg, name, int(values[name]))
                used.add(name)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad configuration value: {exc}") from exc
    unknown = set(values) - used
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return cfg


def load_config(path=None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    values = {}
    if path is not None:
        try:
            values = parse_config_text(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)
