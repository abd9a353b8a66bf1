"""Synthetic stand-ins for speech and noise corpora.

"Tonal speech" is a train of harmonic syllables with a vowel-like spectral envelope
and silent gaps; "speech-shaped noise" is Gaussian noise coloured by a long-term
speech spectrum. Both are deterministic given a seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .frontend import DEFAULT_SAMPLE_RATE, Waveform, write_wav


def tone_mixture(seconds: float, freqs=(440.0, 1000.0, 2500.0), amps=None,
                 sample_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    amps = np.ones(len(freqs)) / len(freqs) if amps is None else np.asarray(amps)
    x = sum(a * np.sin(2 * np.pi * f * t) for f, a in zip(freqs, amps))
    return Waveform(0.5 * x, sample_rate)


def white_noise(seconds: float, seed=None, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    rng = np.random.default_rng(seed)
    return Waveform(0.1 * rng.standard_normal(int(round(seconds * sample_rate))), sample_rate)


def _formant_gain(freqs, formants=((500, 80), (1500, 120), (2500, 160))):
    gain = np.full_like(freqs, 0.05, dtype=float)
    for centre, width in formants:
        gain += 1.0 / (1.0 + ((freqs - centre) / width) ** 2)
    return gain


def tonal_speech(seconds: float, seed=None, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    out = np.zeros(n)
    pos = int(rng.integers(0, sample_rate // 10))
    while pos < n:
        dur = int(rng.uniform(0.12, 0.35) * sample_rate)
        f0 = rng.uniform(100.0, 240.0)
        glide = rng.uniform(-0.2, 0.2)
        formants = tuple((rng.uniform(lo, hi), rng.uniform(60, 180))
                         for lo, hi in ((300, 900), (900, 2200), (2200, 3200)))
        t = np.arange(dur) / sample_rate
        inst_f0 = f0 * (1.0 + glide * t / max(t[-1], 1e-9))
        phase = 2 * np.pi * np.cumsum(inst_f0) / sample_rate
        harmonics = np.arange(1, int(4000 // f0) + 1)
        gains = _formant_gain(harmonics * f0, formants)
        syl = (gains[:, None] * np.sin(harmonics[:, None] * phase[None, :])).sum(axis=0)
        syl *= np.hanning(dur) * rng.uniform(0.3, 1.0)
        end = min(pos + dur, n)
        out[pos:end] += syl[:end - pos]
        pos = end + int(rng.uniform(0.03, 0.2) * sample_rate)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.5 / peak
    return Waveform(out, sample_rate)


def speech_shaped_noise(seconds: float, seed=None, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    # flat below 500 Hz, then roughly -9 dB/octave
    shape = 1.0 / np.sqrt(1.0 + (freqs / 500.0) ** 3)
    x = np.fft.irfft(spec * shape, n)
    return Waveform(0.1 * x / np.std(x), sample_rate)


def write_corpus(root, n_clean: int, clean_seconds: float, n_noise: int, noise_seconds: float,
                 seed: int = 0, noise_kind: str = "speech_shaped") -> tuple[list[Path], list[Path]]:
    """Write ``clean/*.wav`` and ``noise/*.wav`` under ``root``; return both path lists."""
    root = Path(root)
    noise_fn = {"speech_shaped": speech_shaped_noise, "white": white_noise}[noise_kind]
    clean_paths, noise_paths = [], []
    for i in range(n_clean):
        p = root / "clean" / f"utt{i:04d}.wav"
        write_wav(p, tonal_speech(clean_seconds, seed=(seed, 0, i)))
        clean_paths.append(p)
    for i in range(n_noise):
        p = root / "noise" / f"noise{i:03d}.wav"
        write_wav(p, noise_fn(noise_seconds, seed=(seed, 1, i)))
        noise_paths.append(p)
    return clean_paths, noise_paths
