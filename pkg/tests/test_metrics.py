import json
import sys

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dbtnet.data import build_pairs
from dbtnet.frontend import Waveform
from dbtnet.metrics import (ExternalScorer, MetricReport, delta_segsnr, evaluate_corpus, sdr, segsnr,
                            si_sdr)
from dbtnet.model import DBTNet, ModelConfig
from dbtnet.pipeline import enhance_waveform
from dbtnet.synth import write_corpus


def ref_signal(n=8000, seed=0):
    return np.random.default_rng(seed).standard_normal(n)


def test_sdr_examples():
    r = ref_signal()
    assert sdr(r, r) == 60.0
    assert sdr(np.zeros_like(r), r) == pytest.approx(0.0, abs=1e-12)
    assert sdr(2 * r, r) == pytest.approx(0.0, abs=1e-12)  # not scale invariant


def test_sdr_known_noise_ratio():
    r = ref_signal()
    n = ref_signal(seed=1)
    n *= np.sqrt(np.sum(r ** 2) / (10 * np.sum(n ** 2)))
    assert sdr(r + n, r) == pytest.approx(10.0, abs=1e-9)


def test_si_sdr_examples():
    r = ref_signal()
    assert si_sdr(2 * r, r) == 60.0
    assert si_sdr(-r, r) == 60.0
    ortho = ref_signal(seed=3)
    ortho -= np.dot(ortho, r) / np.dot(r, r) * r
    assert si_sdr(ortho, r) == -60.0


@settings(max_examples=40, deadline=None)
@given(st.integers(-10, 10), st.floats(0.01, 100.0), st.integers(0, 1000))
def test_si_sdr_scale_invariance(k, a, seed):
    r = ref_signal(2000, seed)
    est = r + 0.5 * ref_signal(2000, seed + 1)
    base = si_sdr(est, r)
    assert si_sdr(2.0 ** k * est, r) == base
    assert si_sdr(a * est, r) == pytest.approx(base, abs=1e-9)


def test_metric_input_errors():
    with pytest.raises(ValueError):
        sdr(np.ones(5), np.ones(6))
    with pytest.raises(ValueError):
        si_sdr(np.ones(5), np.zeros(5))


def test_segsnr_clamps():
    r = ref_signal(16000)
    assert segsnr(r, r) == 35.0
    assert segsnr(r + 100 * ref_signal(16000, 1), r) == -10.0
    assert delta_segsnr(r, r + 100 * ref_signal(16000, 1), r) == 45.0


def test_segsnr_skips_silent_frames():
    r = ref_signal(16000)
    r[:8000] = 0.0
    est = r.copy()
    est[8000:] += 0.1 * ref_signal(8000, 2)
    est[:8000] = ref_signal(8000, 3)  # errors in silent frames must not count
    frames = [(s, s + 320) for s in range(0, 16000 - 320 + 1, 160)]
    expected = []
    for a, b in frames:
        sig = np.sum(r[a:b] ** 2)
        if sig > 1e-8 * max(np.sum(r[x:y] ** 2) for x, y in frames):
            expected.append(np.clip(10 * np.log10(sig / np.sum((r[a:b] - est[a:b]) ** 2)), -10, 35))
    assert segsnr(est, r) == pytest.approx(np.mean(expected), abs=1e-12)


def test_segsnr_monotone_in_noise():
    r = ref_signal(16000)
    noise = ref_signal(16000, 5)
    scores = [segsnr(r + g * noise, r) for g in (0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0)]
    assert all(b <= a for a, b in zip(scores, scores[1:]))


def test_report_buckets_and_json(tmp_path):
    rep = MetricReport()
    rep.add("u1", -5, {"sdr": 1.0})
    rep.add("u2", -5, {"sdr": 3.0})
    rep.add("u3", 0, {"sdr": 10.0})
    with pytest.raises(ValueError):
        rep.add("u1", 0, {"sdr": 0.0})
    means = rep.bucket_means()
    assert means[-5.0]["sdr"] == 2.0 and means[0.0]["sdr"] == 10.0
    assert means["all"]["count"] == 3 and means["all"]["sdr"] == pytest.approx(14 / 3)
    assert "all" in rep.table()
    data = json.loads(rep.save_json(tmp_path / "r.json").read_text())
    assert set(data["utterances"]) == {"u1", "u2", "u3"}


@pytest.fixture(scope="module")
def tiny_setup(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval")
    clean, noise = write_corpus(root, 2, 0.5, 1, 1.0, seed=4)
    torch.manual_seed(0)
    model = DBTNet(ModelConfig(channels=8, heads=2, n_atfat=1, ffn_dim=16, dilations=(1, 2)))
    return root, build_pairs(clean, noise, 3, seed=1), model


def test_evaluate_corpus_counts_and_lengths(tiny_setup):
    _, manifest, model = tiny_setup
    rep = evaluate_corpus(model, manifest, ("si_sdr", "segsnr"))
    assert len(rep) == len(manifest)
    assert {"si_sdr", "d_si_sdr", "segsnr", "d_segsnr"} <= set(rep.metric_names)
    with pytest.raises(ValueError):
        evaluate_corpus(model, manifest, ("pesq",))


def test_external_scorer_protocol(tiny_setup):
    root, manifest, model = tiny_setup
    script = root / "scorer.py"
    script.write_text("import sys\nprint('debug line')\nprint('score', len(sys.argv[1]) > 0 and 4.25)\n")
    scorer = ExternalScorer("fake", [sys.executable, str(script)])
    rep = evaluate_corpus(model, manifest[:1], ("sdr",), scorers=[scorer])
    assert next(iter(rep.scores.values()))["fake"] == 4.25
    bad = ExternalScorer("bad", [sys.executable, "-c", "import sys; sys.exit(3)"])
    with pytest.raises(RuntimeError):
        bad.score("a.wav", "b.wav")


def test_enhancement_preserves_length(tiny_setup):
    _, _, model = tiny_setup
    for n in (1600, 8001, 12345):
        w = Waveform(ref_signal(n))
        assert len(enhance_waveform(model, w)) == n
    silent = enhance_waveform(model, Waveform(np.zeros(4000)))
    assert not np.any(silent.samples)
