"""Loss, optimisation loop, resumable state and the single-pair overfit oracle."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import torch

from .checkpoint import read_checkpoint, save_checkpoint
from .data import PairDataset, batch_indices, compressed_ri
from .frontend import StftConfig, Waveform
from .model import DBTNet, ModelConfig, safe_magnitude
from .pipeline import enhance_waveform

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class LossReport:
    l_ri: torch.Tensor
    l_mag: torch.Tensor
    l_full: torch.Tensor
    mu: float

    def as_floats(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("l_ri", "l_mag", "l_full")}


def _planes(x):
    if isinstance(x, (tuple, list)):
        return x[0], x[1]
    if x.dim() < 3 or x.shape[-3] != 2:
        raise ValueError(f"expected an (real, imag) pair or a ... x 2 x T x F tensor, got {tuple(x.shape)}")
    return x.select(-3, 0), x.select(-3, 1)


def loss_full(est, target, mu: float = 0.5) -> LossReport:
    """mu * L_RI + (1 - mu) * L_mag, all in the compressed domain.

    L_RI is the sum of the per-plane mean squared errors; L_mag is the mean squared
    error of the magnitudes.
    """
    er, ei = _planes(est)
    tr, ti = _planes(target)
    if er.shape != tr.shape or ei.shape != ti.shape:
        raise ValueError(f"estimate {tuple(er.shape)} and target {tuple(tr.shape)} differ in shape")
    l_ri = torch.mean((er - tr) ** 2) + torch.mean((ei - ti) ** 2)
    l_mag = torch.mean((safe_magnitude(er, ei) - safe_magnitude(tr, ti)) ** 2)
    return LossReport(l_ri, l_mag, mu * l_ri + (1.0 - mu) * l_mag, mu)


@dataclass
class TrainConfig:
    epochs: int = 40
    max_steps: Optional[int] = None
    batch_size: int = 4
    lr: float = 8e-4
    lr_decay: float = 1.0  # multiplicative per epoch; 1.0 = constant
    clip_norm: Optional[float] = None
    chunk_seconds: Optional[float] = 4.0
    val_every: Optional[int] = None  # steps; None = once per epoch
    checkpoint_every: Optional[int] = None
    log_every: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainState:
    model: DBTNet
    optimizer: torch.optim.Optimizer
    step: int = 0
    seed: int = 0
    best_val: Optional[float] = None
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, model_cfg: ModelConfig, lr: float = 8e-4, seed: int = 0) -> "TrainState":
        torch.manual_seed(seed)
        model = DBTNet(model_cfg)
        return cls(model, torch.optim.Adam(model.parameters(), lr=lr), seed=seed)

    def save(self, path) -> Path:
        return save_checkpoint(path, self.model, self.optimizer, self.step, self.seed,
                               self.best_val, extra={"history": self.history})

    @classmethod
    def load(cls, path, lr: Optional[float] = None) -> "TrainState":
        payload = read_checkpoint(path)
        model = DBTNet(ModelConfig.from_dict(payload["model_config"]))
        model.load_state_dict(payload["state_dict"])
        opt = torch.optim.Adam(model.parameters(), lr=8e-4 if lr is None else lr)
        if payload["optimizer"] is not None:
            opt.load_state_dict(payload["optimizer"])
        return cls(model, opt, payload["step"], payload["seed"], payload["best_val"],
                   list(payload["extra"].get("history", [])))


def _set_lr(optimizer, lr):
    for group in optimizer.param_groups:
        group["lr"] = lr


def train_step(state: TrainState, noisy: torch.Tensor, clean: torch.Tensor,
               clip_norm: Optional[float] = None, dump_dir=None) -> dict:
    model = state.model
    model.train()
    state.optimizer.zero_grad(set_to_none=True)
    report = loss_full(model(noisy).final, clean, model.cfg.mu)
    if not torch.isfinite(report.l_full):
        path = None
        if dump_dir is not None:
            path = Path(dump_dir) / f"nonfinite_batch_step{state.step}.pt"
            path.parent.mkdir(parents=True, exist_ok=True)
            torch.save({"noisy": noisy, "clean": clean, "step": state.step,
                        "losses": report.as_floats()}, path)
        raise TrainingDiverged(f"non-finite loss at step {state.step} {report.as_floats()}"
                               + (f"; batch dumped to {path}" if path else ""))
    report.l_full.backward()
    if clip_norm is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), clip_norm)
    state.optimizer.step()
    state.step += 1
    return report.as_floats()


def validate(model: DBTNet, dataset: PairDataset, batch_size: int = 4) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            idx = range(start, min(start + batch_size, len(dataset)))
            noisy, clean = (torch.from_numpy(a) for a in dataset.batch(idx))
            total += float(loss_full(model(noisy).final, clean, model.cfg.mu).l_full) * len(idx)
            count += len(idx)
    return total / count


def train(dataset: PairDataset, model_cfg: ModelConfig, cfg: TrainConfig = TrainConfig(),
          seed: int = 0, state: Optional[TrainState] = None, val_dataset: Optional[PairDataset] = None,
          workdir=None, stop_after: Optional[int] = None) -> TrainState:
    """Optimise until ``cfg.max_steps`` (or ``cfg.epochs`` full passes) are done.

    Batch composition is a function of (seed, step) only, so a state saved at any step
    and reloaded continues exactly as an uninterrupted run would. ``stop_after`` ends this
    call after that many further steps without changing the schedule.
    """
    state = state or TrainState.fresh(model_cfg, cfg.lr, seed)
    per_epoch = max(1, len(dataset) // cfg.batch_size)
    total = cfg.max_steps if cfg.max_steps is not None else cfg.epochs * per_epoch
    if stop_after is not None:
        total = min(total, state.step + stop_after)
    workdir = Path(workdir) if workdir is not None else None
    if workdir:
        workdir.mkdir(parents=True, exist_ok=True)
    log_path = workdir / "train_log.jsonl" if workdir else None
    val_every = cfg.val_every or per_epoch
    t0 = time.perf_counter()

    while state.step < total:
        _set_lr(state.optimizer, cfg.lr * cfg.lr_decay ** (state.step // per_epoch))
        idx = batch_indices(len(dataset), cfg.batch_size, state.seed, state.step)
        noisy, clean = (torch.from_numpy(a) for a in dataset.batch(idx))
        losses = train_step(state, noisy, clean, cfg.clip_norm, dump_dir=workdir)
        record = {"step": state.step, **losses, "wall_time": round(time.perf_counter() - t0, 4)}
        state.history.append(record)
        if log_path and state.step % cfg.log_every == 0:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(record) + "\n")
        if val_dataset is not None and state.step % val_every == 0:
            val = validate(state.model, val_dataset, cfg.batch_size)
            log.info("step %d validation l_full %.5f", state.step, val)
            if state.best_val is None or val < state.best_val:
                state.best_val = val
                if workdir:
                    state.save(workdir / "best.pt")
        if workdir and cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
            state.save(workdir / "last.pt")
    if workdir:
        state.save(workdir / "last.pt")
    return state


@dataclass
class OverfitReport:
    losses: list
    si_sdr_db: float
    noisy_si_sdr_db: float
    steps: int
    enhanced: Waveform

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


def overfit_single(noisy: Waveform, clean: Waveform, model_cfg: ModelConfig, max_steps: int = 2000,
                   lr: float = 8e-4, clip_norm: Optional[float] = 5.0, seed: int = 0,
                   stft_cfg: StftConfig = StftConfig(), stop_loss_ratio: Optional[float] = None,
                   stop_si_sdr: Optional[float] = None, check_every: int = 100) -> OverfitReport:
    """Fit one pair; optionally stop once both targets (loss ratio, SI-SDR) are met."""
    from .metrics import si_sdr

    state = TrainState.fresh(model_cfg, lr, seed)
    x = torch.from_numpy(compressed_ri(noisy, stft_cfg, model_cfg.compression)[None])
    y = torch.from_numpy(compressed_ri(clean, stft_cfg, model_cfg.compression)[None])
    losses = []
    for step in range(max_steps):
        losses.append(train_step(state, x, y, clip_norm)["l_full"])
        done = (stop_loss_ratio is not None and stop_si_sdr is not None
                and (step + 1) % check_every == 0 and losses[-1] < stop_loss_ratio * losses[0])
        if done and si_sdr(enhance_waveform(state.model, noisy, stft_cfg), clean) >= stop_si_sdr:
            break
    state.model.eval()
    enhanced = enhance_waveform(state.model, noisy, stft_cfg)
    return OverfitReport(losses, si_sdr(enhanced, clean), si_sdr(noisy, clean), len(losses), enhanced)

