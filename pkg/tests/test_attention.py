import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dbtnet.attention import (AIAT, ATFABlock, AdaptiveHierarchicalAttention, AxisTransformer,
                              GRUFeedForward, MultiHeadSelfAttention, fold, unfold)
from dbtnet.blocks import init_weights


def built(module):
    init_weights(module)
    return module


def test_attention_rows_sum_to_one():
    torch.manual_seed(0)
    mhsa = built(MultiHeadSelfAttention(16, 4)).double()
    for _ in range(100):
        length = int(torch.randint(1, 20, ()))
        attn = mhsa.attention_weights(3 * torch.randn(2, length, 16, dtype=torch.float64))
        assert torch.allclose(attn.sum(-1), torch.ones(()).double(), atol=1e-6)


def test_attention_scale_is_sqrt_model_dim():
    mhsa = built(MultiHeadSelfAttention(8, 2))
    x = torch.randn(1, 5, 8)
    q = mhsa.q(x).view(1, 5, 2, 4).transpose(1, 2)
    k = mhsa.k(x).view(1, 5, 2, 4).transpose(1, 2)
    manual = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(8), dim=-1)
    assert torch.allclose(mhsa.attention_weights(x), manual)


def test_single_position_attention():
    mhsa = built(MultiHeadSelfAttention(8, 2))
    x = torch.randn(3, 1, 8)
    y, attn = mhsa(x, return_attention=True)
    assert torch.equal(attn, torch.ones(3, 2, 1, 1))
    assert torch.allclose(y, mhsa.norm(x + mhsa.out(mhsa.v(x))), atol=1e-6)


def test_attention_errors():
    mhsa = MultiHeadSelfAttention(8, 2)
    with pytest.raises(ValueError):
        mhsa(torch.randn(1, 0, 8))
    with pytest.raises(ValueError):
        mhsa(torch.randn(1, 3, 6))
    with pytest.raises(ValueError):
        MultiHeadSelfAttention(10, 4)


def test_batch_permutation_equivariance():
    torch.manual_seed(1)
    block = built(AxisTransformer("time", 8, 2, 16))
    x = torch.randn(4, 8, 5, 6)
    perm = torch.tensor([2, 0, 3, 1])
    assert torch.allclose(block(x)[perm], block(x[perm]), atol=1e-6)


def test_gru_ffn_shapes_and_long_sequence():
    ffn = built(GRUFeedForward(64, 256))
    assert ffn.gru.hidden_size == 128 and ffn.linear.in_features == 256
    h, _ = ffn.gru(torch.randn(2, 7, 64))
    assert h.shape == (2, 7, 256)
    long = ffn(10 * torch.randn(1, 1000, 64))
    assert long.shape == (1, 1000, 64) and torch.isfinite(long).all()


def test_gru_ffn_zero_parameters_gives_layer_norm_of_zero():
    ffn = GRUFeedForward(8, 16)
    for p in ffn.parameters():
        torch.nn.init.zeros_(p)
    assert torch.equal(ffn(torch.zeros(2, 4, 8)), torch.zeros(2, 4, 8))


def test_fold_shapes_and_inverse():
    x = torch.randn(2, 64, 9, 80)
    t = fold(x, "time")
    f = fold(x, "freq")
    assert t.shape == (2 * 80, 9, 64) and f.shape == (2 * 9, 80, 64)
    assert torch.equal(unfold(t, "time", x.shape), x)
    assert torch.equal(unfold(f, "freq", x.shape), x)
    assert torch.equal(t[80 + 3, 4], x[1, :, 4, 3])
    with pytest.raises(ValueError):
        fold(x, "channel")


@pytest.mark.parametrize("t", [1, 7, 301])
def test_shape_preservation(t):
    torch.manual_seed(0)
    x = torch.randn(1, 64, t, 80)
    block = built(ATFABlock(64, 4, 256))
    with torch.no_grad():
        assert block.atab(x).shape == x.shape
        assert block.afab(x).shape == x.shape
        y = block(x)
        assert y.shape == x.shape
        assert AdaptiveHierarchicalAttention(64)([x, y]).shape == x.shape


def test_atfa_alpha_beta_identities():
    torch.manual_seed(2)
    block = built(ATFABlock(8, 2, 16))
    x = torch.randn(2, 8, 5, 6)
    with torch.no_grad():
        block.alpha.zero_()
        block.beta.zero_()
        assert torch.equal(block.combine(x), x)
        block.alpha.fill_(1.0)
        assert torch.equal(block.combine(x), x + block.atab(x))


def test_alpha_gradient_is_inner_product():
    torch.manual_seed(3)
    block = built(ATFABlock(8, 2, 16)).double()
    x = torch.randn(1, 8, 4, 5, dtype=torch.float64)
    w = torch.randn_like(x)
    out = block.combine(x)
    (out * w).sum().backward()
    expected = (w * block.atab(x)).sum()
    assert torch.allclose(block.alpha.grad, expected.detach(), rtol=1e-9)


def test_time_branch_never_mixes_frequency_rows():
    torch.manual_seed(4)
    tb = built(AxisTransformer("time", 8, 2, 16)).double()
    x = torch.randn(1, 8, 6, 7, dtype=torch.float64)
    x2 = x.clone()
    x2[:, :, 2, 3] += 5.0
    delta = (tb(x2) - tb(x)).abs().amax(dim=(0, 1, 2))
    assert delta[3] > 0
    assert torch.all(delta[torch.arange(7) != 3] == 0)


def test_aha_weights_sum_to_one_on_random_inputs():
    torch.manual_seed(5)
    aha = built(AdaptiveHierarchicalAttention(8)).double()
    for _ in range(100):
        n = int(torch.randint(1, 6, ()))
        maps = [3 * torch.randn(2, 8, 3, 4, dtype=torch.float64) for _ in range(n)]
        assert torch.allclose(aha.weights(maps).sum(1), torch.ones(2).double(), atol=1e-6)


def test_aha_identities():
    aha = built(AdaptiveHierarchicalAttention(8))
    x = torch.randn(2, 8, 3, 4)
    w = aha.weights([x, x, x])
    assert torch.allclose(w, torch.full((2, 3), 1 / 3))
    maps = [torch.randn(2, 8, 3, 4) for _ in range(3)]
    assert torch.equal(aha(maps), maps[-1])  # gamma starts at 0
    with torch.no_grad():
        aha.gamma.fill_(0.7)
    out, w1 = aha([x], return_weights=True)
    assert torch.equal(w1, torch.ones(2, 1))
    assert torch.allclose(out, x * 1.7)
    with pytest.raises(ValueError):
        aha([])
    with pytest.raises(ValueError):
        aha([x, torch.randn(2, 8, 3, 5)])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 6))
def test_aiat_shape_property(n_blocks, t, f):
    aiat = built(AIAT(8, 2, 16, n_blocks))
    x = torch.randn(1, 8, t, f)
    with torch.no_grad():
        out, mids = aiat(x)
    assert out.shape == x.shape and len(mids) == n_blocks


def test_aiat_gradients_match_finite_differences(fd_errors):
    torch.manual_seed(6)
    aiat = built(AIAT(8, 2, 16, 2)).double()
    with torch.no_grad():
        for blk in aiat.blocks:
            blk.alpha.uniform_(0.5, 1.5)
            blk.beta.uniform_(0.5, 1.5)
        aiat.aha.gamma.fill_(0.8)
    x = torch.randn(1, 8, 5, 6, dtype=torch.float64)
    w = torch.randn(1, 8, 5, 6, dtype=torch.float64)
    errors = fd_errors(list(aiat.parameters()), lambda: (aiat(x)[0] * w).sum(), n_samples=200)
    assert errors.max() < 1e-3
