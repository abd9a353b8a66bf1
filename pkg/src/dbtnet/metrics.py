"""Waveform quality metrics and corpus-level reports.

SDR here is the single-source form ``10 log10(|ref|^2 / |ref - est|^2)``; SI-SDR projects
the estimate onto the reference first. Both are clamped to +/-60 dB.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frontend import StftConfig, Waveform, write_wav

DB_CLAMP = 60.0
SEG_CLAMP = (-10.0, 35.0)
SILENCE_RATIO = 1e-8


def _arrays(est, ref):
    e = est.samples if isinstance(est, Waveform) else np.asarray(est, dtype=np.float64)
    r = ref.samples if isinstance(ref, Waveform) else np.asarray(ref, dtype=np.float64)
    if e.shape != r.shape:
        raise ValueError(f"length mismatch: estimate {e.shape} vs reference {r.shape}")
    if not np.any(r):
        raise ValueError("reference signal is all zeros")
    return e, r


def _ratio_db(num, den, lo=-DB_CLAMP, hi=DB_CLAMP) -> float:
    if den <= 0:
        return hi
    if num <= 0:
        return lo
    return float(np.clip(10.0 * np.log10(num / den), lo, hi))


def sdr(est, ref) -> float:
    e, r = _arrays(est, ref)
    return _ratio_db(np.dot(r, r), np.sum((r - e) ** 2))


def si_sdr(est, ref) -> float:
    e, r = _arrays(est, ref)
    target = (np.dot(e, r) / np.dot(r, r)) * r
    return _ratio_db(np.dot(target, target), np.sum((e - target) ** 2))


def segsnr(est, ref, frame: int = 320, hop: int = 160, clamp=SEG_CLAMP) -> float:
    """Mean of clamped per-frame SNRs over frames whose reference energy is not silent."""
    e, r = _arrays(est, ref)
    if len(r) < frame:
        raise ValueError(f"signal shorter than one frame ({len(r)} < {frame})")
    starts = np.arange(0, len(r) - frame + 1, hop)
    idx = starts[:, None] + np.arange(frame)[None, :]
    sig = np.sum(r[idx] ** 2, axis=1)
    err = np.sum((r[idx] - e[idx]) ** 2, axis=1)
    keep = sig > SILENCE_RATIO * sig.max()
    scores = [_ratio_db(s, n, *clamp) for s, n in zip(sig[keep], err[keep])]
    return float(np.mean(scores))


def delta_segsnr(enhanced, noisy, clean, **kw) -> float:
    return segsnr(enhanced, clean, **kw) - segsnr(noisy, clean, **kw)


METRICS = {"sdr": sdr, "si_sdr": si_sdr, "segsnr": segsnr}


class ExternalScorer:
    """Wraps an external program as a metric.

    Protocol: the command is run as ``command + [clean.wav, enhanced.wav]`` and must print
    the score as the last non-empty line of stdout.
    """

    def __init__(self, name: str, command: list[str], timeout: float = 300.0):
        self.name = name
        self.command = list(command)
        self.timeout = timeout

    def score(self, clean_path, enhanced_path) -> float:
        proc = subprocess.run(self.command + [str(clean_path), str(enhanced_path)],
                              capture_output=True, text=True, timeout=self.timeout)
        if proc.returncode != 0:
            raise RuntimeError(f"scorer {self.name!r} failed ({proc.returncode}): {proc.stderr.strip()}")
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if not lines:
            raise RuntimeError(f"scorer {self.name!r} printed nothing")
        return float(lines[-1].split()[-1])


@dataclass
class MetricReport:
    scores: dict = field(default_factory=dict)  # utt_id -> {metric: dB}
    snr: dict = field(default_factory=dict)  # utt_id -> mixture SNR

    def add(self, utt_id: str, snr_db: float, values: dict):
        if utt_id in self.scores:
            raise ValueError(f"duplicate utterance id {utt_id}")
        self.scores[utt_id] = dict(values)
        self.snr[utt_id] = float(snr_db)

    def __len__(self):
        return len(self.scores)

    @property
    def metric_names(self) -> list[str]:
        names = []
        for vals in self.scores.values():
            names += [k for k in vals if k not in names]
        return names

    def bucket_means(self) -> dict:
        """{snr_db: {metric: mean}} plus an ``"all"`` bucket."""
        buckets = defaultdict(list)
        for utt, snr in self.snr.items():
            buckets[snr].append(utt)
            buckets["all"].append(utt)
        out = {}
        for key in sorted((k for k in buckets if k != "all"), key=float) + ["all"]:
            utts = buckets[key]
            out[key] = {m: float(np.mean([self.scores[u][m] for u in utts])) for m in self.metric_names}
            out[key]["count"] = len(utts)
        return out

    def table(self) -> str:
        names = self.metric_names
        head = f"{'SNR (dB)':>9} {'n':>4} " + " ".join(f"{m:>12}" for m in names)
        rows = [head, "-" * len(head)]
        for key, vals in self.bucket_means().items():
            label = key if key == "all" else f"{key:+g}"
            rows.append(f"{label:>9} {vals['count']:>4} " + " ".join(f"{vals[m]:>12.2f}" for m in names))
        return "\n".join(rows)

    def save_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        records = {u: {"snr_db": self.snr[u], **self.scores[u]} for u in self.scores}
        buckets = {str(k): v for k, v in self.bucket_means().items()}
        path.write_text(json.dumps({"utterances": records, "buckets": buckets}, indent=2, sort_keys=True))
        return path


def score_pair(enhanced: Waveform, noisy: Waveform, clean: Waveform, metrics=("sdr", "si_sdr", "segsnr")) -> dict:
    """Scores of the enhanced signal plus the improvement of each metric over the noisy input."""
    out = {}
    for name in metrics:
        fn = METRICS[name]
        enh, base = fn(enhanced, clean), fn(noisy, clean)
        out[name] = enh
        out[f"d_{name}"] = enh - base
    return out


def evaluate_corpus(model, manifest, metrics=("sdr", "si_sdr", "segsnr"), scorers=(),
                    stft_cfg: StftConfig = StftConfig()) -> MetricReport:
    """Enhance each manifest mixture with ``model`` and score it against the clean signal."""
    from .data import realize
    from .pipeline import enhance_waveform

    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}; choose from {sorted(METRICS)}")
    report = MetricReport()
    for rec in manifest:
        noisy, clean = realize(rec)
        enhanced = enhance_waveform(model, noisy, stft_cfg)
        values = score_pair(enhanced, noisy, clean, metrics)
        if scorers:
            with tempfile.TemporaryDirectory() as tmp:
                cp, ep = Path(tmp) / "clean.wav", Path(tmp) / "enhanced.wav"
                write_wav(cp, clean)
                write_wav(ep, enhanced)
                for sc in scorers:
                    values[sc.name] = sc.score(cp, ep)
        report.add(rec.utt_id, rec.snr_db, values)
    return report
