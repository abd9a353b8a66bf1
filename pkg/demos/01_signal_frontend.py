"""
From waveform to compressed spectrogram and back
================================================

The network never sees raw audio. It sees a 161-bin complex spectrogram whose
magnitudes have been square-rooted. This script walks through that frontend.
"""

import numpy as np

from dbtnet.frontend import StftConfig, compress, decompress, istft, mix_at_snr, stft
from dbtnet.synth import speech_shaped_noise, tonal_speech

# A synthetic "utterance": harmonic syllables separated by short pauses.
clean = tonal_speech(3.0, seed=0)
print("clean:", len(clean), "samples at", clean.sample_rate, "Hz")

# 20 ms frames, 10 ms hop; centered framing gives 1 + n // hop frames.
cfg = StftConfig()
spec = stft(clean, cfg)
print("spectrogram (frames, bins):", spec.shape)

# Overlap-add with squared-window normalisation undoes the analysis exactly.
back = istft(spec, cfg, out_length=len(clean))
print("round-trip max error:", np.max(np.abs(back.samples - clean.samples)))

# Power compression squashes the dynamic range but keeps every bin's phase.
comp = compress(spec, 0.5)
print("dynamic range before / after (dB):",
      round(20 * np.log10(spec.magnitude.max() / np.median(spec.magnitude)), 1),
      round(20 * np.log10(comp.magnitude.max() / np.median(comp.magnitude)), 1))
print("phase unchanged:", np.allclose(comp.phase[spec.magnitude > 1e-9], spec.phase[spec.magnitude > 1e-9]))
print("decompress error:", np.max(np.abs(decompress(comp).to_complex() - spec.to_complex())))

# Mixing at a target SNR: a seeded cut of the noise file, scaled to the requested ratio.
noise = speech_shaped_noise(10.0, seed=1)
noisy, scaled = mix_at_snr(clean, noise, snr_db=-5.0, rng_seed=7)
print("measured SNR:", round(10 * np.log10(clean.energy / scaled.energy), 4), "dB")
