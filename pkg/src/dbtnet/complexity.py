"""Parameter and multiply-accumulate audits against the published ablation table."""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch
import torch.nn as nn

from .attention import MultiHeadSelfAttention
from .model import DBTNet, ModelConfig, count_params

# row name -> (config overrides, params in millions, MACs in G/s)
TABLE_II = {
    "MEB-Net(1)": (dict(variant="MEB_ONLY", use_afab=False, use_aha=False, interaction=False), 0.64, 8.04),
    "MEB-Net(2)": (dict(variant="MEB_ONLY", use_atab=False, use_aha=False, interaction=False), 0.64, 7.99),
    "MEB-Net(3)": (dict(variant="MEB_ONLY", use_aha=False, interaction=False), 0.90, 9.71),
    "MEB-Net(4)": (dict(variant="MEB_ONLY", interaction=False), 0.90, 9.72),
    "CPB-Net(1)": (dict(variant="CPB_ONLY", use_afab=False, use_aha=False, interaction=False), 0.91, 10.22),
    "CPB-Net(2)": (dict(variant="CPB_ONLY", use_atab=False, use_aha=False, interaction=False), 0.91, 10.17),
    "CPB-Net(3)": (dict(variant="CPB_ONLY", use_aha=False, interaction=False), 1.18, 11.89),
    "CPB-Net(4)": (dict(variant="CPB_ONLY", interaction=False), 1.18, 11.89),
    "DCB-Net": (dict(variant="DCB"), 3.18, 42.76),
    "DBT-Net-spade": (dict(variant="DBT_SPADE"), 2.91, 40.59),
    "DBT-Net(D=2)": (dict(depth=2), 2.98, 23.65),
    "DBT-Net(D=3)": (dict(depth=3), 3.08, 12.48),
    "DBT-Net(D=4)": (dict(depth=4), 3.18, 6.92),
    "DBT-Net(1)": (dict(use_afab=False, use_aha=False, interaction=False), 2.08, 27.67),
    "DBT-Net(2)": (dict(use_atab=False, use_aha=False, interaction=False), 2.08, 27.49),
    "DBT-Net(3)": (dict(use_aha=False, interaction=False), 2.80, 40.12),
    "DBT-Net(4)": (dict(interaction=False), 2.81, 40.13),
    "DBT-Net(5)": (dict(), 2.91, 40.59),
}


def table_config(row: str, base: ModelConfig | None = None) -> ModelConfig:
    overrides, _, _ = TABLE_II[row]
    base = base or ModelConfig()
    return replace(base, **overrides)


def count_macs(model_or_cfg, seconds: float = 1.0, sample_rate: int = 16000,
               hop: int = 160, batch: int = 1) -> int:
    """Analytic MAC tally for one forward pass over ``seconds`` of audio.

    Counts convolutions, linear layers, GRU recurrences and the two attention
    matmuls (QK^T and AV). Normalisation and pointwise activations are ignored.
    Shapes are traced on the meta device, so no arithmetic is performed.
    """
    cfg = model_or_cfg.cfg if isinstance(model_or_cfg, DBTNet) else model_or_cfg
    with torch.device("meta"):
        model = DBTNet(cfg)
    n_frames = 1 + int(round(seconds * sample_rate)) // hop
    x = torch.empty(batch, 2, n_frames, cfg.n_bins, device="meta")
    return trace_macs(model, x)


def trace_macs(model: nn.Module, *inputs) -> int:
    total = 0

    def conv_hook(m, inp, out):
        nonlocal total
        total += out.numel() * (m.in_channels // m.groups) * m.kernel_size[0] * m.kernel_size[1]

    def linear_hook(m, inp, out):
        nonlocal total
        total += out.numel() * m.in_features

    def gru_shape_only(m):
        # meta-device GRUs unroll step by step; only the output shape is needed
        def forward(x, hx=None):
            nonlocal total
            n, length = (x.shape[0], x.shape[1]) if m.batch_first else (x.shape[1], x.shape[0])
            dirs = 2 if m.bidirectional else 1
            h, i = m.hidden_size, m.input_size
            total += n * length * dirs * 3 * (h * i + h * h)
            shape = (n, length, dirs * h) if m.batch_first else (length, n, dirs * h)
            return x.new_empty(shape), x.new_empty(dirs, n, h)
        return forward

    def attention_hook(m, inp, out):
        nonlocal total
        n, length, c = inp[0].shape
        total += 2 * n * length * length * c

    handles, patched = [], []
    for m in model.modules():
        if isinstance(m, nn.Conv2d):
            handles.append(m.register_forward_hook(conv_hook))
        elif isinstance(m, nn.Linear):
            handles.append(m.register_forward_hook(linear_hook))
        elif isinstance(m, nn.GRU):
            m.forward = gru_shape_only(m)
            patched.append(m)
        elif isinstance(m, MultiHeadSelfAttention):
            handles.append(m.register_forward_hook(attention_hook))
    try:
        with torch.no_grad():
            model(*inputs)
    finally:
        for h in handles:
            h.remove()
        for m in patched:
            del m.forward
    return total


@dataclass
class AuditRow:
    name: str
    params: int
    macs: int
    ref_params_m: float
    ref_macs_g: float

    @property
    def params_rel_err(self) -> float:
        return self.params / 1e6 / self.ref_params_m - 1.0

    @property
    def macs_rel_err(self) -> float:
        return self.macs / 1e9 / self.ref_macs_g - 1.0


def audit(rows=None, base: ModelConfig | None = None, with_macs: bool = True) -> list[AuditRow]:
    out = []
    for name in rows or TABLE_II:
        cfg = table_config(name, base)
        with torch.device("meta"):
            n_params = count_params(DBTNet(cfg))
        macs = count_macs(cfg) if with_macs else 0
        _, ref_p, ref_m = TABLE_II[name]
        out.append(AuditRow(name, n_params, macs, ref_p, ref_m))
    return out


def ordering_violations(rows: list[AuditRow], key: str = "params") -> list[tuple[str, str]]:
    """Pairs (a, b) where the reference says a < b but the measured count says a >= b."""
    bad = []
    for a in rows:
        for b in rows:
            ref_a = getattr(a, f"ref_{key}_m" if key == "params" else "ref_macs_g")
            ref_b = getattr(b, f"ref_{key}_m" if key == "params" else "ref_macs_g")
            if ref_a < ref_b and getattr(a, key) >= getattr(b, key):
                bad.append((a.name, b.name))
    return bad


def format_audit(rows: list[AuditRow], param_tol: float = 0.10, mac_tol: float = 0.20) -> str:
    lines = [f"{'model':<16}{'params(M)':>10}{'ref':>7}{'err':>8}  {'MACs(G/s)':>10}{'ref':>8}{'err':>8}  status"]
    for r in rows:
        ok_p = abs(r.params_rel_err) <= param_tol
        ok_m = abs(r.macs_rel_err) <= mac_tol if r.macs else True
        status = "PASS" if ok_p and ok_m else "FAIL"
        lines.append(f"{r.name:<16}{r.params / 1e6:>10.3f}{r.ref_params_m:>7.2f}{r.params_rel_err:>+8.1%}  "
                     f"{r.macs / 1e9:>10.2f}{r.ref_macs_g:>8.2f}{r.macs_rel_err:>+8.1%}  {status}")
    return "\n".join(lines)
