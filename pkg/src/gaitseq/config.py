"""
Pipeline configuration: one dataclass section per stage, overridable from JSON.

A config file is a JSON object whose top-level keys name sections and whose
values override individual fields, e.g. ``{"encoder": {"hidden_size": 512},
"cnn": {"dims": [32, 16, 8]}}``. Unknown sections or fields are rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .cycles import EventConfig
from .egomotion import RansacConfig
from .synth import ANOMALY_KINDS


@dataclass(frozen=True)
class SignalConfig:
    sample_rate: float = 200.0
    cutoff: float = 40.0
    order: int = 4
    max_lag: int = 40
    accel_channel: int = 2
    angle_channel: int = 1
    cycle_length: int = 200


@dataclass(frozen=True)
class EncoderSection:
    hidden_size: int = 64
    n_layers: int = 2
    bidirectional: bool = True
    keep_prob: float = 0.8
    learning_rate: float = 0.01
    decay_steps: int = 1000
    decay_rate: float = 0.5
    epochs: int = 21
    batch_size: int = 16
    clip_norm: float = 5.0
    init_scale: float = 0.08


@dataclass(frozen=True)
class CnnSection:
    dims: tuple = (16, 16, 2)
    kernel: tuple = (10, 6)
    filters: int = 16
    # desk scale: ~650 steps instead of ~3500, see the estimator default of 0.01
    learning_rate: float = 0.1
    decay_steps: int = 1000
    decay_rate: float = 0.5
    epochs: int = 11
    batch_size: int = 16


@dataclass(frozen=True)
class SvmSection:
    C: float = 1.0
    gamma: float | None = None
    tol: float = 1e-3
    max_iter: int | None = None


@dataclass(frozen=True)
class SplitSection:
    encoder_fraction: float = 4966 / 7941
    encoder_test_fraction: float = 0.1
    classifier_test_fraction: float = 0.1
    max_class_ratio: float = 1.1


@dataclass(frozen=True)
class SynthSection:
    n_walks: int = 200
    anomaly_kinds: tuple = ANOMALY_KINDS
    video: str = "angles"
    n_steps: int = 12
    normal_fraction: float = 0.7


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    signal: SignalConfig = field(default_factory=SignalConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    events: EventConfig = field(default_factory=EventConfig)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    cnn: CnnSection = field(default_factory=CnnSection)
    svm: SvmSection = field(default_factory=SvmSection)
    split: SplitSection = field(default_factory=SplitSection)
    synth: SynthSection = field(default_factory=SynthSection)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, overrides: dict | None) -> "PipelineConfig":
        return cls().updated(overrides or {})

    def updated(self, overrides: dict) -> "PipelineConfig":
        """A copy with ``overrides`` (nested dict) applied."""
        if not isinstance(overrides, dict):
            raise ValueError("config must be a JSON object")
        changes = {}
        known = {f.name: f for f in fields(self)}
        for name, value in overrides.items():
            if name not in known:
                raise ValueError(f"unknown config section {name!r}")
            if name == "seed":
                changes["seed"] = int(value)
                continue
            if not isinstance(value, dict):
                raise ValueError(f"config section {name!r} must be an object")
            section = getattr(self, name)
            names = {f.name for f in fields(section)}
            bad = set(value) - names
            if bad:
                raise ValueError(f"unknown field(s) {sorted(bad)} in section {name!r}")
            coerced = {k: tuple(v) if isinstance(v, list) else v for k, v in value.items()}
            changes[name] = replace(section, **coerced)
        return replace(self, **changes)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def load_config(path=None, seed: int | None = None) -> PipelineConfig:
    """Defaults, then the JSON file at ``path``, then an explicit ``seed``."""
    cfg = PipelineConfig()
    if path is not None:
        cfg = cfg.updated(json.loads(Path(path).read_text()))
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    return cfg
