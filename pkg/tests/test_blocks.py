import pytest
import torch

from dbtnet.blocks import (BranchMerge, ChannelFreqNorm, ComplexDecoder, DenseBlock, DenseEncoder,
                           MaskingDecoder, SubPixelUpsample, fit_width, freq_widths, init_weights,
                           pixel_shuffle_freq)

torch.manual_seed(0)


def small_block(**kw):
    block = DenseBlock(8, **kw)
    init_weights(block)
    return block


def test_dense_block_preserves_shape():
    block = small_block()
    for f in (161, 80):
        assert block(torch.randn(2, 8, 9, f)).shape == (2, 8, 9, f)


def test_dense_block_channel_budget():
    block = DenseBlock(64)
    assert [layer.conv.in_channels for layer in block.layers] == [64, 128, 192, 256]
    assert all(layer.conv.out_channels == 64 for layer in block.layers)
    with pytest.raises(ValueError):
        block(torch.randn(1, 32, 4, 10))


def test_dense_block_zero_in_zero_out_without_norm():
    block = small_block(norm=False)
    assert torch.equal(block(torch.zeros(1, 8, 5, 11)), torch.zeros(1, 8, 5, 11))


def test_receptive_field_by_impulse():
    block = small_block()
    assert block.receptive_field() == 16
    t, probe = 40, 20
    x = torch.randn(1, 8, t, 7, dtype=torch.float64)
    block = block.double()
    base = block(x)
    x2 = x.clone()
    x2[:, :, probe] += 1.0
    changed = (block(x2) - base).abs().amax(dim=(0, 1, 3)) > 0
    frames = torch.nonzero(changed).flatten().tolist()
    # causal: only frames probe..probe+15 can see the perturbation
    assert frames == list(range(probe, probe + 16))


def test_layer_norm_axis():
    norm = ChannelFreqNorm(4)
    x = torch.randn(2, 4, 3, 10) * 5 + 2
    y = norm(x)
    assert torch.allclose(y.mean(dim=(1, 3)), torch.zeros(2, 3), atol=1e-5)
    assert torch.allclose(y.var(dim=(1, 3), unbiased=False), torch.ones(2, 3), atol=1e-3)


def test_encoder_shapes():
    enc = DenseEncoder(2, 8)
    assert enc(torch.randn(1, 2, 11, 161)).shape == (1, 8, 11, 80)
    assert DenseEncoder(1, 8)(torch.randn(1, 1, 4, 161)).shape == (1, 8, 4, 80)
    assert DenseEncoder(2, 8, depth=2)(torch.randn(1, 2, 4, 161)).shape == (1, 8, 4, 40)
    with pytest.raises(ValueError):
        DenseEncoder(3, 8)


def test_freq_widths():
    assert freq_widths(161, 1) == [161, 80]
    assert freq_widths(161, 4) == [161, 80, 40, 20, 10]
    with pytest.raises(ValueError):
        freq_widths(3, 4)


def test_pixel_shuffle_tags():
    c, factor, f = 3, 2, 5
    x = torch.zeros(1, c * factor, 1, f)
    for k in range(factor):
        for ch in range(c):
            x[0, k * c + ch, 0] = 100 * k + ch + 1000 * torch.arange(f)
    y = pixel_shuffle_freq(x, factor)
    assert y.shape == (1, c, 1, f * factor)
    for ch in range(c):
        for pos in range(f):
            for k in range(factor):
                assert y[0, ch, 0, factor * pos + k] == 100 * k + ch + 1000 * pos
    with pytest.raises(ValueError):
        pixel_shuffle_freq(torch.zeros(1, 5, 1, 3), 2)


def test_pixel_shuffle_factor_one_identity():
    x = torch.randn(2, 4, 3, 7)
    assert torch.equal(pixel_shuffle_freq(x, 1), x)


def test_fit_width_replicates_top_bin():
    x = torch.arange(4.0).view(1, 1, 1, 4)
    assert fit_width(x, 6).flatten().tolist() == [0, 1, 2, 3, 3, 3]
    assert fit_width(x, 3).flatten().tolist() == [0, 1, 2]


def test_subpixel_upsample_to_161():
    up = SubPixelUpsample(8, 2, out_width=161)
    assert up(torch.randn(2, 8, 5, 80)).shape == (2, 8, 5, 161)


def test_masking_decoder_range_and_shape():
    dec = MaskingDecoder(8)
    init_weights(dec)
    m = dec(3 * torch.randn(2, 8, 7, 80))
    assert m.shape == (2, 1, 7, 161)
    assert m.min() > 0 and m.max() < 1


def test_masking_decoder_zero_input_half_mask():
    dec = MaskingDecoder(8)
    init_weights(dec)
    m = dec(torch.zeros(1, 8, 3, 80))
    assert torch.equal(m, torch.full_like(m, 0.5))


def test_complex_decoder_zero_in_zero_out_and_unbounded():
    dec = ComplexDecoder(8)
    init_weights(dec)
    assert torch.equal(dec(torch.zeros(1, 8, 3, 80)), torch.zeros(1, 1, 3, 161))
    out = dec(10 * torch.randn(1, 8, 6, 80))
    assert out.shape == (1, 1, 6, 161)
    assert out.min() < 0


def test_activation_ranges():
    x = 5 * torch.randn(1000, dtype=torch.float64)
    assert torch.nn.PReLU()(torch.zeros(3)).eq(0).all()
    assert (torch.sigmoid(x) > 0).all() and (torch.sigmoid(x) < 1).all()
    assert (torch.tanh(x) >= -1).all() and (torch.tanh(x) <= 1).all()


def test_merge():
    merge = BranchMerge(16, 8)
    a, b = torch.randn(1, 8, 3, 10), torch.randn(1, 8, 3, 10)
    assert merge(a, b).shape == (1, 8, 3, 10)
    with pytest.raises(ValueError):
        merge(a)


def test_block_determinism():
    block = small_block()
    x = torch.randn(1, 8, 6, 20)
    assert torch.equal(block(x), block(x))


def test_init_zero_biases():
    dec = ComplexDecoder(8)
    init_weights(dec)
    for name, p in dec.named_parameters():
        if name.endswith("conv.bias") or name == "out_conv.bias":
            assert not p.any()
