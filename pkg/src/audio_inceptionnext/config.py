"""Run configuration from layered ``key=value`` files and overrides.

Keys are dotted: ``model.stage_channels=64,128,256,512``, ``spectrogram.hop_ms=5``,
``augment.freq_masks=2``, ``schedule.epochs=30``, ``seed=0``, ``paths.out=run/``.
Precedence is defaults < file < overrides.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional

from .augment import AugmentPolicy
from .dsp import SpectrogramConfig
from .model import ModelConfig
from .train import TrainSchedule

SECTIONS = {
    "spectrogram": SpectrogramConfig,
    "augment": AugmentPolicy,
    "model": ModelConfig,
    "schedule": TrainSchedule,
}


@dataclass
class RunConfig:
    spectrogram: SpectrogramConfig = field(default_factory=SpectrogramConfig.finetune)
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule.finetune)
    seed: int = 0
    paths: Dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        self.model.validate()
        self.schedule.validate()
        spec = self.spectrogram.resolved()
        frames = spec.clip_seconds * 1000.0 / spec.hop_ms
        if abs(frames - round(frames)) > 1e-6:
            raise ValueError(f"clip of {spec.clip_seconds}s is not a whole number of {spec.hop_ms} ms hops")
        if self.augment.enabled:
            self.augment.validate(spec.target_frames, spec.n_mels)

    def to_lines(self) -> list:
        lines = []
        for section in SECTIONS:
            for k, v in dataclasses.asdict(getattr(self, section)).items():
                lines.append(f"{section}.{k}={_format(v)}")
        lines.append(f"seed={self.seed}")
        lines += [f"paths.{k}={v}" for k, v in sorted(self.paths.items())]
        return lines


def _format(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return "" if v is None else str(v)


def _coerce(text: str, annotation, key: str):
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is typing.Union and type(None) in args:
        if text.strip().lower() in ("", "none"):
            return None
        return _coerce(text, next(a for a in args if a is not type(None)), key)
    if origin in (tuple, typing.Tuple) or annotation in (tuple,):
        inner = args[0] if args else int
        return tuple(_coerce(x.strip(), inner, key) for x in text.split(",") if x.strip())
    if annotation is bool:
        lowered = text.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {text!r}")
    if annotation is int:
        try:
            return int(text)
        except ValueError:
            raise ValueError(f"{key}: expected an integer, got {text!r}") from None
    if annotation is float:
        try:
            return float(text)
        except ValueError:
            raise ValueError(f"{key}: expected a number, got {text!r}") from None
    return text.strip()


def coerce_fields(cls, values: Mapping[str, str], base=None):
    """Build ``cls`` (a dataclass) from string ``values`` layered over ``base`` (or defaults)."""
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in values.items():
        if k not in known:
            raise ValueError(f"unknown key {cls.__name__}.{k}")
        kwargs[k] = _coerce(v, hints[k], k)
    if base is None:
        return cls(**kwargs)
    return dataclasses.replace(base, **kwargs)


def parse_lines(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key=value, got {line!r}")
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def read_config_file(path) -> Dict[str, str]:
    with open(path, encoding="utf-8") as f:
        return parse_lines(f, str(path))


def build_run_config(
    file_values: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, str]] = None,
    base: Optional[RunConfig] = None,
) -> RunConfig:
    merged: Dict[str, str] = {}
    merged.update(file_values or {})
    merged.update(overrides or {})
    cfg = base if base is not None else RunConfig()
    grouped: Dict[str, Dict[str, str]] = {s: {} for s in SECTIONS}
    seed, paths = cfg.seed, dict(cfg.paths)
    for key, value in merged.items():
        section, _, name = key.partition(".")
        if key == "seed":
            seed = _coerce(value, int, key)
        elif section == "paths" and name:
            paths[name] = value
        elif section in SECTIONS and name:
            grouped[section][name] = value
        else:
            raise ValueError(f"unknown config key {key!r}")
    kwargs = {s: coerce_fields(SECTIONS[s], grouped[s], getattr(cfg, s)) for s in SECTIONS}
    return RunConfig(seed=seed, paths=paths, **kwargs)
