"""Noisy/clean pair manifests and the feature dataset used for training."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .frontend import StftConfig, Waveform, chunk, compress, mix_at_snr, pick_noise_offset, read_wav, stft

DEFAULT_SNR_GRID = (-5, -4, -3, -2, -1, 0)


@dataclass(frozen=True)
class PairRecord:
    clean: str
    noise: str
    snr_db: float
    offset: int
    seed: int

    @property
    def utt_id(self) -> str:
        return f"{Path(self.clean).stem}__{Path(self.noise).stem}__{self.snr_db:+g}dB__{self.seed}"


class PairManifest(list):
    """A list of :class:`PairRecord`, stored as JSON lines (one record per line)."""

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for rec in self:
                fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "PairManifest":
        out = cls()
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    out.append(PairRecord(**json.loads(line)))
                except (TypeError, json.JSONDecodeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad manifest record ({exc})") from None
        return out


def _wav_length(path) -> int:
    _, data = wavfile.read(path, mmap=True)
    return data.shape[0]


def build_pairs(clean_paths, noise_paths, count: int, seed: int = 0,
                snr_grid=DEFAULT_SNR_GRID) -> PairManifest:
    """Draw ``count`` (clean, noise, SNR, noise-cut) combinations deterministically."""
    clean_paths = [str(p) for p in clean_paths]
    noise_paths = [str(p) for p in noise_paths]
    if not clean_paths or not noise_paths:
        raise ValueError("need at least one clean and one noise file")
    clean_len = {p: _wav_length(p) for p in clean_paths}
    noise_len = {p: _wav_length(p) for p in noise_paths}
    rng = np.random.default_rng(seed)
    manifest = PairManifest()
    for _ in range(count):
        c = clean_paths[int(rng.integers(len(clean_paths)))]
        candidates = [p for p in noise_paths if noise_len[p] >= clean_len[c]]
        if not candidates:
            raise ValueError(f"no noise file is long enough for {c}")
        nz = candidates[int(rng.integers(len(candidates)))]
        snr = float(snr_grid[int(rng.integers(len(snr_grid)))])
        rec_seed = int(rng.integers(2 ** 31))
        offset = pick_noise_offset(clean_len[c], noise_len[nz], rec_seed)
        manifest.append(PairRecord(c, nz, snr, offset, rec_seed))
    return manifest


def realize(rec: PairRecord) -> tuple[Waveform, Waveform]:
    """Return (noisy, clean) for one manifest record."""
    clean = read_wav(rec.clean)
    noisy, _ = mix_at_snr(clean, read_wav(rec.noise), rec.snr_db, offset=rec.offset)
    return noisy, clean


def compressed_ri(w: Waveform, stft_cfg: StftConfig, c: float) -> np.ndarray:
    s = compress(stft(w, stft_cfg), c)
    return np.stack([s.real, s.imag]).astype(np.float32)


class PairDataset:
    """Compressed (noisy, clean) RI features for every chunk of every record.

    Items are 2 x T x F float32 arrays; all chunks share one length so batches stack.
    Feature extraction may use several threads; item order never depends on it.
    """

    def __init__(self, manifest, stft_cfg: StftConfig = StftConfig(), compression: float = 0.5,
                 chunk_seconds: float | None = 4.0, workers: int = 1):
        self.stft_cfg = stft_cfg
        self.compression = compression
        self.chunk_seconds = chunk_seconds
        with ThreadPoolExecutor(max(1, workers)) as pool:
            per_record = list(pool.map(self._features, manifest))
        self.items = [item for feats in per_record for item in feats]
        if not self.items:
            raise ValueError("manifest produced no training chunks")

    def _features(self, rec):
        noisy, clean = realize(rec)
        if self.chunk_seconds is None:
            pairs = [(noisy, clean)]
        else:
            pairs = list(zip(chunk(noisy, self.chunk_seconds), chunk(clean, self.chunk_seconds)))
        return [(compressed_ri(n, self.stft_cfg, self.compression),
                 compressed_ri(c, self.stft_cfg, self.compression)) for n, c in pairs]

    def __len__(self):
        return len(self.items)

    def batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        noisy = np.stack([self.items[i][0] for i in indices])
        clean = np.stack([self.items[i][1] for i in indices])
        return noisy, clean


def batch_indices(n_items: int, batch_size: int, seed: int, step: int) -> np.ndarray:
    """Indices for optimizer step ``step``: a pure function of (seed, step).

    Each epoch is a fresh seeded permutation; a trailing partial batch is dropped.
    """
    per_epoch = max(1, n_items // batch_size)
    epoch, pos = divmod(step, per_epoch)
    perm = np.random.default_rng([seed, epoch]).permutation(n_items)
    return perm[pos * batch_size:(pos + 1) * batch_size]
