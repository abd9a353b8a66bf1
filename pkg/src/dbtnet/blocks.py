"""Convolutional blocks shared by both branches.

All feature maps use the ``B x C x T x F`` layout.
"""

from __future__ import annotations

import math
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F


def downsampled_width(width: int) -> int:
    # valid (1, 3) conv with stride 2; even widths get one bin of padding per side
    return width // 2


def freq_widths(n_bins: int, depth: int) -> list[int]:
    """Frequency widths at each encoder level, e.g. 161 -> [161, 80] for depth 1."""
    widths = [n_bins]
    for _ in range(depth):
        widths.append(downsampled_width(widths[-1]))
    if widths[-1] < 1:
        raise ValueError(f"{n_bins} bins cannot be downsampled {depth} times")
    return widths


class ChannelFreqNorm(nn.Module):
    """Layer norm over (C, F) at every (batch, frame) position, with a per-channel affine."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        mean = x.mean(dim=(1, 3), keepdim=True)
        var = x.var(dim=(1, 3), keepdim=True, unbiased=False)
        x = (x - mean) / torch.sqrt(var + self.eps)
        return x * self.weight.view(1, -1, 1, 1) + self.bias.view(1, -1, 1, 1)


class DenseLayer(nn.Module):
    def __init__(self, in_channels, out_channels, dilation, kernel=(2, 3), norm=True):
        super().__init__()
        self.dilation = dilation
        self.kernel = kernel
        self.conv = nn.Conv2d(in_channels, out_channels, kernel, dilation=(dilation, 1))
        self.norm = ChannelFreqNorm(out_channels) if norm else nn.Identity()
        self.act = nn.PReLU(out_channels)

    def forward(self, x):
        kt, kf = self.kernel
        # causal in time, "same" in frequency
        x = F.pad(x, ((kf - 1) // 2, kf // 2, (kt - 1) * self.dilation, 0))
        return self.act(self.norm(self.conv(x)))


class DenseBlock(nn.Module):
    """Dilated dense block: layer ``i`` sees the block input plus all earlier layer outputs.

    Every layer emits ``channels`` maps; the block returns the last layer's output, so
    T, F and C are all preserved.
    """

    def __init__(self, channels: int = 64, dilations: Sequence[int] = (1, 2, 4, 8),
                 kernel=(2, 3), norm: bool = True):
        super().__init__()
        self.channels = channels
        self.layers = nn.ModuleList(
            DenseLayer(channels * (i + 1), channels, d, kernel, norm)
            for i, d in enumerate(dilations))

    def receptive_field(self) -> int:
        return 1 + sum((layer.kernel[0] - 1) * layer.dilation for layer in self.layers)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ValueError(f"dense block expects B x {self.channels} x T x F, got {tuple(x.shape)}")
        skip = x
        out = x
        for layer in self.layers:
            out = layer(skip)
            skip = torch.cat([skip, out], dim=1)
        return out


class Downsample(nn.Module):
    """(1, 3) conv with frequency stride 2, halving the frequency width."""

    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, (1, 3), stride=(1, 2))
        self.norm = ChannelFreqNorm(channels)
        self.act = nn.PReLU(channels)

    def forward(self, x):
        if x.shape[-1] % 2 == 0:
            x = F.pad(x, (1, 1))
        return self.act(self.norm(self.conv(x)))


class DenseEncoder(nn.Module):
    """1x1 conv -> dense block -> ``depth`` frequency-halving convs, each with LN + PReLU."""

    def __init__(self, in_channels: int, channels: int = 64, dilations=(1, 2, 4, 8),
                 depth: int = 1):
        super().__init__()
        if in_channels not in (1, 2):
            raise ValueError(f"encoder input must have 1 (magnitude) or 2 (RI) planes, got {in_channels}")
        if depth < 1:
            raise ValueError("encoder depth must be >= 1")
        self.in_channels = in_channels
        self.inp_conv = nn.Conv2d(in_channels, channels, (1, 1))
        self.inp_norm = ChannelFreqNorm(channels)
        self.inp_act = nn.PReLU(channels)
        self.dense = DenseBlock(channels, dilations)
        self.down = nn.ModuleList(Downsample(channels) for _ in range(depth))

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"encoder expects B x {self.in_channels} x T x F, got {tuple(x.shape)}")
        x = self.inp_act(self.inp_norm(self.inp_conv(x)))
        x = self.dense(x)
        for layer in self.down:
            x = layer(x)
        return x


def pixel_shuffle_freq(x: torch.Tensor, factor: int) -> torch.Tensor:
    """Interleave channel groups into the frequency axis.

    Channel ``k * C + c`` at frequency ``f`` lands on channel ``c`` at ``factor * f + k``.
    """
    b, ch, t, f = x.shape
    if ch % factor:
        raise ValueError(f"{ch} channels cannot be split into {factor} groups")
    x = x.view(b, factor, ch // factor, t, f)
    x = x.permute(0, 2, 3, 4, 1)
    return x.reshape(b, ch // factor, t, f * factor)


def fit_width(x: torch.Tensor, width: int) -> torch.Tensor:
    """Replicate the top frequency bin (or crop) until the last axis has ``width`` bins."""
    have = x.shape[-1]
    if have == width:
        return x
    if have > width:
        return x[..., :width]
    return torch.cat([x, x[..., -1:].expand(*x.shape[:-1], width - have)], dim=-1)


class SubPixelUpsample(nn.Module):
    def __init__(self, channels: int = 64, factor: int = 2, kernel=(1, 3), out_width=None,
                 norm: bool = True):
        super().__init__()
        self.factor = factor
        self.kernel = kernel
        self.out_width = out_width
        self.conv = nn.Conv2d(channels, channels * factor, kernel)
        self.norm = ChannelFreqNorm(channels) if norm else nn.Identity()
        self.act = nn.PReLU(channels) if norm else nn.Identity()

    def forward(self, x):
        kt, kf = self.kernel
        x = F.pad(x, ((kf - 1) // 2, kf // 2, kt - 1, 0))
        x = pixel_shuffle_freq(self.conv(x), self.factor)
        if self.out_width is not None:
            x = fit_width(x, self.out_width)
        return self.act(self.norm(x))


class DenseDecoder(nn.Module):
    """Dense block followed by one sub-pixel upsampler per encoder level."""

    def __init__(self, channels=64, dilations=(1, 2, 4, 8), widths=(161, 80)):
        super().__init__()
        self.dense = DenseBlock(channels, dilations)
        targets = list(widths[:-1])[::-1]
        self.up = nn.ModuleList(SubPixelUpsample(channels, 2, out_width=w) for w in targets)

    def forward(self, x):
        x = self.dense(x)
        for layer in self.up:
            x = layer(x)
        return x


class MaskingDecoder(nn.Module):
    """Decoder producing a (0, 1) spectral gain through a tanh/sigmoid gated 1x1 head."""

    def __init__(self, channels=64, dilations=(1, 2, 4, 8), widths=(161, 80)):
        super().__init__()
        self.body = DenseDecoder(channels, dilations, widths)
        self.out_conv = nn.Conv2d(channels, 1, (1, 1))
        self.mask1 = nn.Conv2d(1, 1, (1, 1))
        self.mask2 = nn.Conv2d(1, 1, (1, 1))
        self.mask_conv = nn.Conv2d(1, 1, (1, 1))

    def forward(self, x):
        x = self.out_conv(self.body(x))
        x = torch.tanh(self.mask1(x)) * torch.sigmoid(self.mask2(x))
        return torch.sigmoid(self.mask_conv(x))


class ComplexDecoder(nn.Module):
    """Decoder for one unbounded residual plane (real or imaginary)."""

    def __init__(self, channels=64, dilations=(1, 2, 4, 8), widths=(161, 80)):
        super().__init__()
        self.body = DenseDecoder(channels, dilations, widths)
        self.out_conv = nn.Conv2d(channels, 1, (1, 1))

    def forward(self, x):
        return self.out_conv(self.body(x))


class BranchMerge(nn.Module):
    """Channel concat of the branch encodings -> 1x1 conv -> PReLU."""

    def __init__(self, in_channels=128, channels=64):
        super().__init__()
        self.in_channels = in_channels
        self.conv = nn.Conv2d(in_channels, channels, (1, 1))
        self.act = nn.PReLU(channels)

    def forward(self, *features):
        x = torch.cat(features, dim=1) if len(features) > 1 else features[0]
        if x.shape[1] != self.in_channels:
            raise ValueError(f"merge expects {self.in_channels} channels, got {x.shape[1]}")
        return self.act(self.conv(x))


def init_weights(module: nn.Module) -> None:
    """Fan-in uniform for conv/linear kernels, orthogonal recurrent kernels, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight[0].numel()
            bound = 1.0 / math.sqrt(fan_in)
            nn.init.uniform_(m.weight, -bound, bound)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.GRU):
            for name, p in m.named_parameters():
                if name.startswith("weight_hh"):
                    for gate in p.chunk(3, dim=0):
                        nn.init.orthogonal_(gate)
                elif name.startswith("weight_ih"):
                    bound = 1.0 / math.sqrt(p.shape[1])
                    nn.init.uniform_(p, -bound, bound)
                else:
                    nn.init.zeros_(p)
