"""Dual-branch magnitude / complex enhancement network and its ablation variants."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .attention import AIAT
from .blocks import (BranchMerge, ChannelFreqNorm, ComplexDecoder, DenseEncoder,
                     MaskingDecoder, freq_widths, init_weights)

VARIANTS = ("DBT", "MEB_ONLY", "CPB_ONLY", "DCB", "DBT_SPADE")
PHASE_EPS = 1e-8


@dataclass
class ModelConfig:
    channels: int = 64
    heads: int = 4
    ffn_dim: Optional[int] = None  # defaults to 4 * channels
    n_atfat: int = 4
    dilations: tuple = (1, 2, 4, 8)
    depth: int = 1
    n_bins: int = 161
    variant: str = "DBT"
    use_atab: bool = True
    use_afab: bool = True
    use_aha: bool = True
    interaction: bool = True
    collect_before_interaction: bool = False
    mu: float = 0.5
    compression: float = 0.5

    def __post_init__(self):
        self.dilations = tuple(int(d) for d in self.dilations)
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.channels
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.n_atfat < 1:
            raise ValueError("n_atfat must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")
        if not 0.0 < self.compression <= 1.0:
            raise ValueError(f"compression must lie in (0, 1], got {self.compression}")
        if self.channels % self.heads:
            raise ValueError(f"channels {self.channels} not divisible by heads {self.heads}")
        if not (self.use_atab or self.use_afab):
            raise ValueError("at least one of use_atab / use_afab must be on")
        freq_widths(self.n_bins, self.depth)

    @property
    def dual(self) -> bool:
        return self.variant in ("DBT", "DCB", "DBT_SPADE")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EnhancementOutput:
    """Estimates in the compressed domain; RI pairs are (real, imag) tensors of B x T x F."""

    mask: Optional[torch.Tensor]
    meb_ri: tuple
    cpb_ri: tuple
    final_ri: tuple

    @property
    def final(self) -> torch.Tensor:
        return torch.stack(self.final_ri, dim=1)


class Interaction(nn.Module):
    """f_self + f_other * sigmoid(LN(conv1x1([f_self, f_other])))."""

    def __init__(self, channels=64):
        super().__init__()
        self.conv = nn.Conv2d(2 * channels, channels, (1, 1))
        self.norm = ChannelFreqNorm(channels)

    def gate(self, f_self, f_other):
        return torch.sigmoid(self.norm(self.conv(torch.cat([f_self, f_other], dim=1))))

    def forward(self, f_self, f_other):
        return f_self + f_other * self.gate(f_self, f_other)


class Branch(nn.Module):
    def __init__(self, cfg: ModelConfig, features: str, head: str):
        super().__init__()
        self.features = features
        self.head = head
        c = cfg.channels
        widths = freq_widths(cfg.n_bins, cfg.depth)
        self.encoder = DenseEncoder(1 if features == "mag" else 2, c, cfg.dilations, cfg.depth)
        self.merge = BranchMerge(2 * c if cfg.dual else c, c)
        self.aiat = AIAT(c, cfg.heads, cfg.ffn_dim, cfg.n_atfat,
                         cfg.use_atab, cfg.use_afab, cfg.use_aha)
        if head == "mask":
            self.mask_decoder = MaskingDecoder(c, cfg.dilations, widths)
        else:
            self.real_decoder = ComplexDecoder(c, cfg.dilations, widths)
            self.imag_decoder = ComplexDecoder(c, cfg.dilations, widths)

    def decode(self, x):
        if self.head == "mask":
            return self.mask_decoder(x)[:, 0]
        return self.real_decoder(x)[:, 0], self.imag_decoder(x)[:, 0]


def safe_magnitude(real, imag):
    """sqrt(r^2 + i^2) with a zero (not NaN) gradient at the origin."""
    power = real * real + imag * imag
    positive = power > 0
    return torch.where(positive, torch.sqrt(torch.where(positive, power, torch.ones_like(power))),
                       torch.zeros_like(power))


def noisy_phase(real, imag, eps: float = PHASE_EPS):
    mag = safe_magnitude(real, imag)
    denom = torch.clamp(mag, min=eps)
    return mag, real / denom, imag / denom


def reconstruct_dual(noisy, mask, res_real, res_imag):
    """Masked noisy magnitude with noisy phase, plus the complex residual."""
    mag, cos, sin = noisy_phase(noisy[:, 0], noisy[:, 1])
    coarse_mag = mag * mask
    meb = (coarse_mag * cos, coarse_mag * sin)
    final = (meb[0] + res_real, meb[1] + res_imag)
    return EnhancementOutput(mask, meb, (res_real, res_imag), final)


def reconstruct_spade(noisy, mask, cpb_real, cpb_imag):
    """Average of the two magnitude estimates, with the complex branch's phase."""
    mag, cos, sin = noisy_phase(noisy[:, 0], noisy[:, 1])
    meb_mag = mag * mask
    cpb_mag = safe_magnitude(cpb_real, cpb_imag)
    avg = 0.5 * (meb_mag + cpb_mag)
    phase = torch.atan2(cpb_imag, cpb_real)
    final = (avg * torch.cos(phase), avg * torch.sin(phase))
    return EnhancementOutput(mask, (meb_mag * cos, meb_mag * sin), (cpb_real, cpb_imag), final)


class DBTNet(nn.Module):
    """Input: compressed noisy RI pair as a B x 2 x T x F tensor."""

    def __init__(self, cfg: ModelConfig = None):
        super().__init__()
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        v = cfg.variant
        self.branch_a = None
        self.branch_b = None
        if v in ("DBT", "DBT_SPADE", "MEB_ONLY"):
            self.branch_a = Branch(cfg, "mag", "mask")
        elif v == "DCB":
            self.branch_a = Branch(cfg, "ri", "complex")
        if v in ("DBT", "DBT_SPADE", "DCB", "CPB_ONLY"):
            self.branch_b = Branch(cfg, "ri", "complex")
        if cfg.dual and cfg.interaction:
            self.inter_a = nn.ModuleList(Interaction(cfg.channels) for _ in range(cfg.n_atfat))
            self.inter_b = nn.ModuleList(Interaction(cfg.channels) for _ in range(cfg.n_atfat))
        else:
            self.inter_a = self.inter_b = None
        init_weights(self)

    def _branch_input(self, branch, noisy):
        if branch.features == "mag":
            return safe_magnitude(noisy[:, 0], noisy[:, 1]).unsqueeze(1)
        return noisy

    def encode(self, noisy):
        cfg = self.cfg
        if noisy.dim() != 4 or noisy.shape[1] != 2:
            raise ValueError(f"expected B x 2 x T x F input, got {tuple(noisy.shape)}")
        if noisy.shape[-1] != cfg.n_bins:
            raise ValueError(f"model built for {cfg.n_bins} bins, got {noisy.shape[-1]}")
        branches = [b for b in (self.branch_a, self.branch_b) if b is not None]
        enc = [b.encoder(self._branch_input(b, noisy)) for b in branches]
        if cfg.dual:
            return [branches[0].merge(enc[0], enc[1]), branches[1].merge(enc[1], enc[0])]
        return [branches[0].merge(enc[0])]

    def sequence_model(self, feats):
        """Run the AIATs (in lockstep when dual) and return the aggregated features."""
        branches = [b for b in (self.branch_a, self.branch_b) if b is not None]
        if len(branches) == 1:
            out, _ = branches[0].aiat(feats[0])
            return [out]
        a, b = feats
        mids_a, mids_b = [], []
        collect_early = self.cfg.collect_before_interaction
        for i in range(self.cfg.n_atfat):
            a = branches[0].aiat.blocks[i](a)
            b = branches[1].aiat.blocks[i](b)
            if collect_early:
                mids_a.append(a)
                mids_b.append(b)
            if self.inter_a is not None:
                a, b = self.inter_a[i](a, b), self.inter_b[i](b, a)
            if not collect_early:
                mids_a.append(a)
                mids_b.append(b)
        return [branches[0].aiat.aggregate(mids_a), branches[1].aiat.aggregate(mids_b)]

    def forward(self, noisy, force_mask=None, force_residual=None) -> EnhancementOutput:
        """``force_mask`` / ``force_residual`` replace decoder outputs (probing only)."""
        feats = self.sequence_model(self.encode(noisy))
        v = self.cfg.variant
        zeros = torch.zeros_like(noisy[:, 0])
        if v == "CPB_ONLY":
            ri = self.branch_b.decode(feats[0])
            return EnhancementOutput(None, (zeros, zeros), ri, ri)
        if v == "DCB":
            ri1 = self.branch_a.decode(feats[0])
            ri2 = self.branch_b.decode(feats[1])
            final = (ri1[0] + ri2[0], ri1[1] + ri2[1])
            return EnhancementOutput(None, ri1, ri2, final)

        mask = self.branch_a.decode(feats[0]) if force_mask is None else force_mask
        mask = mask.expand_as(zeros) if torch.is_tensor(mask) else torch.full_like(zeros, mask)
        if v == "MEB_ONLY":
            out = reconstruct_dual(noisy, mask, zeros, zeros)
            return EnhancementOutput(mask, out.meb_ri, (zeros, zeros), out.meb_ri)
        if force_residual is None:
            res = self.branch_b.decode(feats[1])
        else:
            res = tuple(torch.full_like(zeros, r) if not torch.is_tensor(r) else r
                        for r in force_residual)
        if v == "DBT_SPADE":
            return reconstruct_spade(noisy, mask, *res)
        return reconstruct_dual(noisy, mask, *res)

    def enhance(self, spec) -> EnhancementOutput:
        """Run on a single compressed :class:`~dbtnet.frontend.Spectrogram`."""
        if not spec.compressed:
            raise ValueError("model input must be a compressed spectrogram")
        if not np.isclose(spec.compression_exponent, self.cfg.compression):
            raise ValueError(f"spectrogram compressed with {spec.compression_exponent}, "
                             f"model expects {self.cfg.compression}")
        dtype = next(self.parameters()).dtype
        x = torch.from_numpy(np.stack([spec.real, spec.imag])[None]).to(dtype)
        return self(x)


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
