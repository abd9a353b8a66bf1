"""Waveform-in, waveform-out enhancement."""

from __future__ import annotations

import numpy as np
import torch

from .frontend import Spectrogram, StftConfig, Waveform, compress, decompress, istft, stft
from .model import DBTNet


def enhance_waveform(model: DBTNet, noisy: Waveform, stft_cfg: StftConfig = StftConfig()) -> Waveform:
    """stft -> compress -> network -> decompress -> istft; output length equals input length.

    An all-zero input is returned unchanged: the complex branch's biases would otherwise
    synthesise a faint signal out of silence.
    """
    if not np.any(noisy.samples):
        return Waveform(np.zeros(len(noisy)), noisy.sample_rate)
    spec = compress(stft(noisy, stft_cfg), model.cfg.compression)
    with torch.no_grad():
        out = model.enhance(spec)
    real, imag = (t[0].double().numpy() for t in out.final_ri)
    est = Spectrogram(real, imag, compressed=True, compression_exponent=spec.compression_exponent,
                      sample_rate=spec.sample_rate)
    return istft(decompress(est), stft_cfg, out_length=len(noisy))
