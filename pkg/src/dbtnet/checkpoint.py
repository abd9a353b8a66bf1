"""Single-file checkpoint container.

Layout (a ``torch.save`` dict)::

    format        "dbtnet-checkpoint"
    version       1
    model_config  ModelConfig as a plain dict
    state_dict    named parameter tensors
    optimizer     optimizer state dict or None
    step          optimizer steps taken
    seed          run seed
    best_val      best validation loss so far or None
    extra         free-form dict
"""

from __future__ import annotations

import pickle
from pathlib import Path

import torch

from .model import DBTNet, ModelConfig

FORMAT = "dbtnet-checkpoint"
VERSION = 1


def save_checkpoint(path, model: DBTNet, optimizer=None, step: int = 0, seed: int = 0,
                    best_val=None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "model_config": model.cfg.to_dict(),
        "state_dict": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "step": int(step),
        "seed": int(seed),
        "best_val": best_val,
        "extra": extra or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def read_checkpoint(path) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except (pickle.UnpicklingError, EOFError, RuntimeError) as exc:
        raise ValueError(f"{path}: unreadable checkpoint ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise ValueError(f"{path}: not a dbtnet checkpoint")
    if payload.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    return payload


def load_model(path) -> DBTNet:
    payload = read_checkpoint(path)
    model = DBTNet(ModelConfig.from_dict(payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
