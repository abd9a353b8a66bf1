import torch
import torch.nn as nn

from dbtnet.attention import GRUFeedForward, MultiHeadSelfAttention
from dbtnet.complexity import (TABLE_II, AuditRow, audit, count_macs, format_audit,
                               ordering_violations, table_config, trace_macs)
from dbtnet.model import ModelConfig


def test_pointwise_conv_macs():
    conv = nn.Conv2d(64, 64, (1, 1))
    t = 13
    assert trace_macs(conv, torch.empty(1, 64, t, 80, device="meta")) == 64 * 64 * t * 80


def test_linear_and_attention_macs():
    mhsa = MultiHeadSelfAttention(8, 2)
    n, length = 3, 5
    # four C x C projections plus QK^T and AV
    expected = 4 * n * length * 8 * 8 + 2 * n * length * length * 8
    assert trace_macs(mhsa, torch.empty(n, length, 8)) == expected


def test_gru_macs_and_restored_forward():
    ffn = GRUFeedForward(8, 16)
    n, length = 2, 7
    gru = n * length * 2 * 3 * (8 * 8 + 8 * 8)
    linear = n * length * 16 * 8
    assert trace_macs(ffn, torch.empty(n, length, 8)) == gru + linear
    out = ffn(torch.randn(n, length, 8))  # the real GRU forward is back in place
    assert out.shape == (n, length, 8) and torch.isfinite(out).all()


def test_table_rows_and_overrides():
    assert len(TABLE_II) == 18
    assert table_config("DBT-Net(4)").interaction is False
    assert table_config("DBT-Net(D=2)").depth == 2
    assert table_config("MEB-Net(1)").use_afab is False


def test_mac_scaling_with_duration():
    cfg = ModelConfig(channels=8, heads=2, n_atfat=1, ffn_dim=16)
    assert count_macs(cfg, seconds=2.0) > count_macs(cfg, seconds=1.0)


def test_default_macs_near_reference():
    macs = count_macs(ModelConfig()) / 1e9
    assert abs(macs / 40.59 - 1) < 0.20


def test_ordering_violations_detects_inversions():
    rows = [AuditRow("a", 10, 0, 1.0, 1.0), AuditRow("b", 5, 0, 2.0, 2.0)]
    assert ordering_violations(rows) == [("a", "b")]
    rows[1].params = 20
    assert ordering_violations(rows) == []


def test_audit_report_text():
    rows = audit(["DBT-Net(5)"], with_macs=False)
    text = format_audit(rows)
    assert "DBT-Net(5)" in text and ("PASS" in text or "FAIL" in text)
