"""Waveform <-> spectrogram conversion, power compression and noisy-pair mixing.

Analysis frames are centered: the waveform is reflect-padded by ``fft_size // 2``
samples on both sides, so a signal of ``n`` samples yields ``1 + n // hop`` frames.
Synthesis divides the overlap-added frames by the overlap-added squared window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be mono (1-D), got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains NaN or Inf")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def energy(self) -> float:
        return float(np.sum(self.samples ** 2))


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 320
    win_length: int = 320
    hop: int = 160
    window: str = "hann"
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if not (0 < self.hop <= self.win_length <= self.fft_size):
            raise ValueError(
                f"need 0 < hop <= win_length <= fft_size, got "
                f"{self.hop}, {self.win_length}, {self.fft_size}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return 1 + n_samples // self.hop

    def analysis_window(self) -> np.ndarray:
        win = get_window(self.window, self.win_length, fftbins=True)
        # zero-pad the window to fft_size, centered
        lpad = (self.fft_size - self.win_length) // 2
        return np.pad(win, (lpad, self.fft_size - self.win_length - lpad))


@dataclass(frozen=True)
class Spectrogram:
    """T x F complex grid held as separate real and imaginary planes."""

    real: np.ndarray
    imag: np.ndarray
    compressed: bool = False
    compression_exponent: float = 1.0
    sample_rate: int = field(default=DEFAULT_SAMPLE_RATE, compare=False)

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ValueError(f"real/imag shape mismatch: {self.real.shape} vs {self.imag.shape}")
        if not (np.all(np.isfinite(self.real)) and np.all(np.isfinite(self.imag))):
            raise ValueError("spectrogram contains NaN or Inf")

    @property
    def shape(self):
        return self.real.shape

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)

    @property
    def phase(self) -> np.ndarray:
        return np.arctan2(self.imag, self.real)

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @classmethod
    def from_complex(cls, z: np.ndarray, **kwargs) -> "Spectrogram":
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), **kwargs)


def stft(w: Waveform, cfg: StftConfig = StftConfig()) -> Spectrogram:
    if len(w) == 0:
        raise ValueError("cannot take the STFT of an empty waveform")
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(f"sample rate {w.sample_rate} Hz does not match STFT design rate "
                         f"{cfg.sample_rate} Hz")
    pad = cfg.fft_size // 2
    x = w.samples
    # reflect padding needs at least pad + 1 samples; fall back to zeros for tiny inputs
    mode = "reflect" if len(x) > pad else "constant"
    x = np.pad(x, (pad, pad), mode=mode)
    n_frames = cfg.n_frames(len(w))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.fft_size)[::cfg.hop][:n_frames]
    spec = np.fft.rfft(frames * cfg.analysis_window(), n=cfg.fft_size, axis=-1)
    return Spectrogram.from_complex(spec, sample_rate=w.sample_rate)


def istft(s: Spectrogram, cfg: StftConfig = StftConfig(), out_length: int | None = None) -> Waveform:
    if s.compressed:
        raise ValueError("istft requires an uncompressed spectrogram; call decompress() first")
    n_frames, n_bins = s.shape
    if n_bins != cfg.n_bins:
        raise ValueError(f"expected {cfg.n_bins} frequency bins, got {n_bins}")
    if out_length is None:
        out_length = (n_frames - 1) * cfg.hop
    if cfg.n_frames(out_length) != n_frames:
        raise ValueError(f"out_length {out_length} inconsistent with {n_frames} frames")

    win = cfg.analysis_window()
    frames = np.fft.irfft(s.to_complex(), n=cfg.fft_size, axis=-1) * win
    total = cfg.fft_size + cfg.hop * (n_frames - 1)
    signal = np.zeros(total)
    norm = np.zeros(total)
    for t in range(n_frames):
        start = t * cfg.hop
        signal[start:start + cfg.fft_size] += frames[t]
        norm[start:start + cfg.fft_size] += win ** 2
    signal /= np.maximum(norm, 1e-10)
    pad = cfg.fft_size // 2
    return Waveform(signal[pad:pad + out_length], s.sample_rate)


def compress(s: Spectrogram, c: float = 0.5) -> Spectrogram:
    """Raise magnitudes to the power ``c`` and keep the phase."""
    if s.compressed:
        raise ValueError("spectrogram is already compressed")
    if not 0 < c <= 1:
        raise ValueError(f"compression exponent must lie in (0, 1], got {c}")
    return _rescale_magnitude(s, c, compressed=True, exponent=c)


def decompress(s: Spectrogram, c: float | None = None) -> Spectrogram:
    if not s.compressed:
        raise ValueError("spectrogram is not compressed")
    c = s.compression_exponent if c is None else c
    return _rescale_magnitude(s, 1.0 / c, compressed=False, exponent=1.0)


def _rescale_magnitude(s, power, compressed, exponent):
    mag = s.magnitude
    nonzero = mag > 0
    gain = np.zeros_like(mag)
    gain[nonzero] = mag[nonzero] ** (power - 1.0)
    return Spectrogram(s.real * gain, s.imag * gain, compressed=compressed,
                       compression_exponent=exponent, sample_rate=s.sample_rate)


def noise_scale_for_snr(clean_energy: float, noise_energy: float, snr_db: float) -> float:
    """Amplitude factor ``k`` such that 10 log10(E_clean / (k^2 E_noise)) = snr_db."""
    return float(np.sqrt(clean_energy / (noise_energy * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float, rng_seed=None,
               offset: int | None = None) -> tuple[Waveform, Waveform]:
    """Cut a random segment of ``noise`` and scale it to reach ``snr_db`` against ``clean``.

    ``offset`` overrides the seeded choice of cut position (used when replaying a manifest).
    """
    if clean.sample_rate != noise.sample_rate:
        raise ValueError("clean and noise sample rates differ")
    n = len(clean)
    if len(noise) < n:
        raise ValueError(f"noise ({len(noise)} samples) shorter than clean ({n} samples)")
    if offset is None:
        offset = pick_noise_offset(n, len(noise), rng_seed)
    if not 0 <= offset <= len(noise) - n:
        raise ValueError(f"noise offset {offset} out of range")
    cut = noise.samples[offset:offset + n]
    e_clean = clean.energy
    e_noise = float(np.sum(cut ** 2))
    if e_clean == 0:
        raise ValueError("clean signal is silent; SNR undefined")
    if e_noise == 0:
        raise ValueError("noise cut is silent; SNR undefined")
    scaled = cut * noise_scale_for_snr(e_clean, e_noise, snr_db)
    return (Waveform(clean.samples + scaled, clean.sample_rate),
            Waveform(scaled, clean.sample_rate))


def pick_noise_offset(clean_length: int, noise_length: int, rng_seed) -> int:
    if noise_length < clean_length:
        raise ValueError("noise shorter than clean")
    return int(np.random.default_rng(rng_seed).integers(0, noise_length - clean_length + 1))


def chunk(w: Waveform, seconds: float, min_seconds: float = 1.0) -> list[Waveform]:
    """Split into fixed-length segments.

    A trailing remainder shorter than ``min_seconds`` is dropped; a longer one is
    zero-padded to the full chunk length.
    """
    size = int(round(seconds * w.sample_rate))
    if size <= 0:
        raise ValueError("chunk length must be positive")
    min_size = int(round(min_seconds * w.sample_rate))
    out = []
    for start in range(0, len(w), size):
        seg = w.samples[start:start + size]
        if len(seg) < size:
            if len(seg) < min_size:
                break
            seg = np.pad(seg, (0, size - len(seg)))
        out.append(Waveform(seg, w.sample_rate))
    return out


def read_wav(path, expected_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    rate, data = wavfile.read(path)
    if rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz "
                         "(resampling is not supported)")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, rate)


def write_wav(path, w: Waveform, subtype: str = "float32") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if subtype == "float32":
        data = w.samples.astype(np.float32)
    elif subtype == "int16":
        data = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV subtype {subtype!r}")
    wavfile.write(path, w.sample_rate, data)

