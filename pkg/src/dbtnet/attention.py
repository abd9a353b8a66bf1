"""Attention-in-attention transformer: axis-wise transformers, their adaptive
time/frequency combination, and hierarchical aggregation of block outputs."""

from __future__ import annotations

import math
from typing import Callable, Optional

import torch
import torch.nn as nn


class MultiHeadSelfAttention(nn.Module):
    """Multi-head self-attention with residual + layer norm.

    Scores are scaled by ``sqrt(model_dim)``, not the per-head width.
    """

    def __init__(self, model_dim: int = 64, heads: int = 4):
        super().__init__()
        if model_dim % heads:
            raise ValueError(f"model_dim {model_dim} not divisible by {heads} heads")
        self.model_dim = model_dim
        self.heads = heads
        self.scale = math.sqrt(model_dim)
        self.q = nn.Linear(model_dim, model_dim, bias=False)
        self.k = nn.Linear(model_dim, model_dim, bias=False)
        self.v = nn.Linear(model_dim, model_dim, bias=False)
        self.out = nn.Linear(model_dim, model_dim, bias=False)
        self.norm = nn.LayerNorm(model_dim)

    def attention_weights(self, x):
        n, length, _ = x.shape
        q = self._split(self.q(x))
        k = self._split(self.k(x))
        return torch.softmax(q @ k.transpose(-1, -2) / self.scale, dim=-1)

    def _split(self, x):
        n, length, c = x.shape
        return x.view(n, length, self.heads, c // self.heads).transpose(1, 2)

    def forward(self, x, return_attention: bool = False):
        if x.dim() != 3 or x.shape[-1] != self.model_dim:
            raise ValueError(f"expected N x L x {self.model_dim}, got {tuple(x.shape)}")
        n, length, c = x.shape
        if length == 0:
            raise ValueError("cannot attend over an empty sequence")
        attn = self.attention_weights(x)
        heads = attn @ self._split(self.v(x))
        heads = heads.transpose(1, 2).reshape(n, length, c)
        y = self.norm(x + self.out(heads))
        return (y, attn) if return_attention else y


class GRUFeedForward(nn.Module):
    """Position-wise feedforward whose first layer is a bidirectional GRU."""

    def __init__(self, model_dim: int = 64, ffn_dim: int = 256):
        super().__init__()
        if ffn_dim % 2:
            raise ValueError("ffn_dim must be even (two GRU directions)")
        self.gru = nn.GRU(model_dim, ffn_dim // 2, batch_first=True, bidirectional=True)
        self.linear = nn.Linear(ffn_dim, model_dim)
        self.norm = nn.LayerNorm(model_dim)

    def forward(self, x):
        h, _ = self.gru(x)
        return self.norm(x + self.linear(torch.relu(h)))


def fold(x: torch.Tensor, axis: str) -> torch.Tensor:
    """B x C x T x F -> sequences along ``axis`` ("time": (B*F) x T x C, "freq": (B*T) x F x C)."""
    b, c, t, f = x.shape
    if axis == "time":
        return x.permute(0, 3, 2, 1).reshape(b * f, t, c)
    if axis == "freq":
        return x.permute(0, 2, 3, 1).reshape(b * t, f, c)
    raise ValueError(f"unknown axis {axis!r}")


def unfold(seq: torch.Tensor, axis: str, shape) -> torch.Tensor:
    b, c, t, f = shape
    if axis == "time":
        return seq.reshape(b, f, t, c).permute(0, 3, 2, 1)
    if axis == "freq":
        return seq.reshape(b, t, f, c).permute(0, 3, 1, 2)
    raise ValueError(f"unknown axis {axis!r}")


class AxisTransformer(nn.Module):
    """MHSA + GRU feedforward run along one axis of a feature map.

    ``axis="time"`` is the temporal attention branch, ``axis="freq"`` the frequency one.
    """

    def __init__(self, axis: str, model_dim=64, heads=4, ffn_dim=256):
        super().__init__()
        if axis not in ("time", "freq"):
            raise ValueError(f"unknown axis {axis!r}")
        self.axis = axis
        self.mhsa = MultiHeadSelfAttention(model_dim, heads)
        self.ffn = GRUFeedForward(model_dim, ffn_dim)

    def forward(self, x):
        seq = self.ffn(self.mhsa(fold(x, self.axis)))
        return unfold(seq, self.axis, x.shape)


class ATFABlock(nn.Module):
    """x + alpha * time_branch(x) + beta * freq_branch(x), then PReLU and a 1x1 conv."""

    def __init__(self, channels=64, heads=4, ffn_dim=256, use_atab=True, use_afab=True):
        super().__init__()
        if not (use_atab or use_afab):
            raise ValueError("an ATFA block needs at least one attention branch")
        self.atab = AxisTransformer("time", channels, heads, ffn_dim) if use_atab else None
        self.afab = AxisTransformer("freq", channels, heads, ffn_dim) if use_afab else None
        self.alpha = nn.Parameter(torch.ones(())) if use_atab else None
        self.beta = nn.Parameter(torch.ones(())) if use_afab else None
        self.act = nn.PReLU(channels)
        self.conv = nn.Conv2d(channels, channels, (1, 1))

    def combine(self, x):
        out = x
        if self.atab is not None:
            out = out + self.alpha * self.atab(x)
        if self.afab is not None:
            out = out + self.beta * self.afab(x)
        return out

    def forward(self, x):
        return self.conv(self.act(self.combine(x)))


class AdaptiveHierarchicalAttention(nn.Module):
    """Softmax-weighted sum of all block outputs, blended into the last one by ``gamma``."""

    def __init__(self, channels=64):
        super().__init__()
        self.score = nn.Conv2d(channels, 1, (1, 1))
        self.gamma = nn.Parameter(torch.zeros(()))

    def weights(self, maps):
        # pool (T, F) -> B x C x 1 x 1, then 1x1 conv -> one logit per batch item and map
        logits = torch.cat([self.score(m.mean(dim=(2, 3), keepdim=True)).flatten(1)
                            for m in maps], dim=1)
        return torch.softmax(logits, dim=1)

    def forward(self, maps, return_weights: bool = False):
        if len(maps) == 0:
            raise ValueError("hierarchical attention needs at least one feature map")
        shape = maps[0].shape
        if any(m.shape != shape for m in maps):
            raise ValueError("all intermediate maps must share one shape")
        w = self.weights(maps)
        stacked = torch.stack(list(maps), dim=1)
        g = (w.view(*w.shape, 1, 1, 1) * stacked).sum(dim=1)
        out = maps[-1] + self.gamma * g
        return (out, w) if return_weights else out


class AIAT(nn.Module):
    """Stack of ATFA blocks followed by hierarchical attention.

    ``hook(i, x)`` runs after block ``i`` (the dual-branch model uses it for the
    cross-branch interaction); hooked outputs feed the next block and the aggregator.
    """

    def __init__(self, channels=64, heads=4, ffn_dim=256, n_blocks=4,
                 use_atab=True, use_afab=True, use_aha=True):
        super().__init__()
        if n_blocks < 1:
            raise ValueError("need at least one ATFA block")
        self.blocks = nn.ModuleList(
            ATFABlock(channels, heads, ffn_dim, use_atab, use_afab) for _ in range(n_blocks))
        self.aha = AdaptiveHierarchicalAttention(channels) if use_aha else None

    def aggregate(self, intermediates):
        if self.aha is None:
            return intermediates[-1]
        return self.aha(intermediates)

    def forward(self, x, hook: Optional[Callable] = None):
        intermediates = []
        for i, block in enumerate(self.blocks):
            x = block(x)
            if hook is not None:
                x = hook(i, x)
            intermediates.append(x)
        return self.aggregate(intermediates), intermediates
