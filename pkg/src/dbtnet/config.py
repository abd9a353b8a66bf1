"""YAML run configuration with strict schema validation.

Example::

    schema_version: 1
    seed: 0
    workers: 1
    model: {channels: 64, heads: 4, n_atfat: 4, variant: DBT}
    stft: {fft_size: 320, hop: 160}
    train: {batch_size: 4, lr: 0.0008, epochs: 40}
    paths: {train_manifest: data/train.jsonl, workdir: runs/dbt}
    audit: {param_tol: 0.10, mac_tol: 0.20}

Omitted keys take their defaults; unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .frontend import StftConfig
from .model import ModelConfig
from .training import TrainConfig

SCHEMA_VERSION = 1


@dataclass
class PathsConfig:
    train_manifest: Optional[str] = None
    val_manifest: Optional[str] = None
    test_manifest: Optional[str] = None
    workdir: str = "runs/default"


@dataclass
class AuditConfig:
    param_tol: float = 0.10
    mac_tol: float = 0.20


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    workers: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ValueError("config root must be a mapping")
        _check_keys("config", d, cls)
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
        sections = {"model": ModelConfig, "stft": StftConfig, "train": TrainConfig,
                    "paths": PathsConfig, "audit": AuditConfig}
        kwargs = {}
        for key, value in d.items():
            if key in sections:
                value = value or {}
                if not isinstance(value, dict):
                    raise ValueError(f"section {key!r} must be a mapping")
                _check_keys(key, value, sections[key])
                value = sections[key](**value)
            kwargs[key] = value
        cfg = cls(**kwargs)
        if cfg.stft.n_bins != cfg.model.n_bins:
            raise ValueError(f"stft gives {cfg.stft.n_bins} bins but model.n_bins is {cfg.model.n_bins}")
        if cfg.workers < 1:
            raise ValueError("workers must be >= 1")
        return cfg


def _check_keys(where, d, cls):
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return RunConfig.from_dict(data or {})


def dump_config(cfg: RunConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text
