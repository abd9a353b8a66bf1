"""``dbtnet`` command-line entry point.

Every failure prints one line ``dbtnet-error: <command>: <message>`` to stderr and
exits with status 2.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_model
from .complexity import TABLE_II, audit, format_audit, ordering_violations, table_config
from .config import RunConfig, dump_config, load_config
from .data import DEFAULT_SNR_GRID, PairDataset, PairManifest, build_pairs
from .frontend import StftConfig, read_wav, stft, write_wav
from .metrics import METRICS, ExternalScorer, evaluate_corpus
from .pipeline import enhance_waveform
from .training import TrainState, train

log = logging.getLogger("dbtnet")


class CommandError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg


def _wav_inputs(path) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.wav"))
        if not files:
            raise CommandError(f"no .wav files in {path}")
        return files
    if not path.exists():
        raise CommandError(f"{path} does not exist")
    return [path]


def cmd_train(args) -> int:
    cfg = _config(args)
    if not cfg.paths.train_manifest:
        raise CommandError("paths.train_manifest is not set")
    workdir = Path(cfg.paths.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, workdir / "config.yaml")
    kw = dict(stft_cfg=cfg.stft, compression=cfg.model.compression,
              chunk_seconds=cfg.train.chunk_seconds, workers=cfg.workers)
    data = PairDataset(PairManifest.load(cfg.paths.train_manifest), **kw)
    val = PairDataset(PairManifest.load(cfg.paths.val_manifest), **kw) if cfg.paths.val_manifest else None
    state = TrainState.load(args.resume, cfg.train.lr) if args.resume else None
    if state is not None and state.model.cfg != cfg.model:
        raise CommandError("checkpoint model config differs from the run config")
    torch.manual_seed(cfg.seed)
    state = train(data, cfg.model, cfg.train, seed=cfg.seed, state=state, val_dataset=val, workdir=workdir)
    last = state.history[-1] if state.history else {}
    print(f"trained to step {state.step}; last l_full {last.get('l_full', float('nan')):.5f}; "
          f"checkpoint {workdir / 'last.pt'}")
    return 0


def cmd_enhance(args) -> int:
    model = load_model(args.checkpoint)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in _wav_inputs(args.input):
        noisy = read_wav(path)
        enhanced = enhance_waveform(model, noisy)
        write_wav(out_dir / path.name, enhanced)
        print(f"{path} -> {out_dir / path.name} ({len(enhanced)} samples)")
    return 0


def _parse_scorer(spec: str) -> ExternalScorer:
    name, sep, command = spec.partition("=")
    if not sep or not name or not command:
        raise CommandError(f"--scorer expects NAME=COMMAND, got {spec!r}")
    return ExternalScorer(name, command.split())


def cmd_evaluate(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise CommandError(f"unknown metrics {sorted(unknown)}; choose from {sorted(METRICS)}")
    model = load_model(args.checkpoint)
    scorers = [_parse_scorer(s) for s in args.scorer]
    report = evaluate_corpus(model, PairManifest.load(args.manifest), metrics, scorers)
    print(report.table())
    if args.report:
        print(f"records written to {report.save_json(args.report)}")
    return 0


def _probe_loss(cfg: RunConfig, model_cfg, steps: int) -> float:
    if not cfg.paths.train_manifest:
        raise CommandError("--probe-steps needs paths.train_manifest in the config")
    data = PairDataset(PairManifest.load(cfg.paths.train_manifest), cfg.stft, model_cfg.compression,
                       cfg.train.chunk_seconds, cfg.workers)
    state = train(data, model_cfg, replace(cfg.train, max_steps=steps), seed=cfg.seed)
    tail = [h["l_full"] for h in state.history[-max(1, steps // 10):]]
    return float(np.mean(tail))


def _rows(arg) -> list[str]:
    if not arg:
        return list(TABLE_II)
    rows = [r.strip() for r in arg.split(",")]
    unknown = [r for r in rows if r not in TABLE_II]
    if unknown:
        raise CommandError(f"unknown rows {unknown}; choose from {list(TABLE_II)}")
    return rows


def cmd_audit(args) -> int:
    cfg = _config(args)
    rows = audit(_rows(args.rows), base=cfg.model)
    print(format_audit(rows, cfg.audit.param_tol, cfg.audit.mac_tol))
    bad = ordering_violations(rows, "params")
    print("parameter ordering: " + ("matches reference" if not bad else
          "violations " + ", ".join(f"{a} >= {b}" for a, b in bad)))
    failed = any(abs(r.params_rel_err) > cfg.audit.param_tol or abs(r.macs_rel_err) > cfg.audit.mac_tol
                 for r in rows)
    return 1 if args.strict and (failed or bad) else 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    rows = _rows(args.rows)
    audited = audit(rows, base=cfg.model)
    print(format_audit(audited, cfg.audit.param_tol, cfg.audit.mac_tol))
    if args.probe_steps:
        print(f"\nshort training probe ({args.probe_steps} steps, mean l_full over the last 10%)")
        for name in rows:
            loss = _probe_loss(cfg, table_config(name, cfg.model), args.probe_steps)
            print(f"{name:<16}{loss:>10.5f}")
    return 0


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = [Path(p) for p in args.wav]
    titles = args.titles.split(",") if args.titles else [p.stem for p in paths]
    if len(titles) != len(paths):
        raise CommandError(f"{len(titles)} titles for {len(paths)} files")
    fig, axes = plt.subplots(1, len(paths), figsize=(4.5 * len(paths), 3.6), squeeze=False)
    stft_cfg = StftConfig()
    for ax, path, title in zip(axes[0], paths, titles):
        w = read_wav(path)
        spec = stft(w, stft_cfg)
        db = 20 * np.log10(spec.magnitude.T + 1e-8)
        extent = (0, len(w) / w.sample_rate, 0, w.sample_rate / 2000)
        im = ax.imshow(db, origin="lower", aspect="auto", extent=extent, cmap="magma",
                       vmin=db.max() - 80, vmax=db.max())
        ax.set_title(title)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("frequency (kHz)")
    fig.colorbar(im, ax=axes[0].tolist(), label="dB")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(args.out, dpi=120)
    plt.close(fig)
    print(f"wrote {args.out}")
    return 0


def cmd_pairs(args) -> int:
    clean = [p for src in args.clean for p in _wav_inputs(src)]
    noise = [p for src in args.noise for p in _wav_inputs(src)]
    grid = [float(v) for v in args.snr_grid.split(",")] if args.snr_grid else DEFAULT_SNR_GRID
    seed = 0 if args.seed is None else args.seed
    manifest = build_pairs(clean, noise, args.count, seed=seed, snr_grid=grid)
    print(f"wrote {len(manifest)} pairs to {manifest.save(args.out)}")
    return 0


def cmd_config(args) -> int:
    text = dump_config(_config(args), args.out)
    if not args.out:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument("--workers", type=int, default=None, help="data-preparation threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dbtnet", description="Dual-branch speech enhancement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", parents=[common], help="enhance a WAV file or a directory of WAVs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on a pair manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--metrics", default="sdr,si_sdr,segsnr")
    p.add_argument("--scorer", action="append", default=[], metavar="NAME=COMMAND",
                   help="external scorer, called as COMMAND clean.wav enhanced.wav")
    p.add_argument("--report", help="write per-utterance JSON records here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common], help="audit ablation topologies, optionally train each briefly")
    p.add_argument("--config")
    p.add_argument("--rows", help="comma-separated row names (default: all)")
    p.add_argument("--probe-steps", type=int, default=0)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("audit", parents=[common], help="parameter and MAC counts against reference values")
    p.add_argument("--config")
    p.add_argument("--rows")
    p.add_argument("--strict", action="store_true", help="exit 1 when any row is out of tolerance")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("plot", parents=[common], help="side-by-side log-magnitude spectrograms")
    p.add_argument("wav", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--titles", help="comma-separated panel titles")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("pairs", parents=[common], help="build a noisy/clean pair manifest")
    p.add_argument("--clean", nargs="+", required=True, help="clean WAV files or directories")
    p.add_argument("--noise", nargs="+", required=True, help="noise WAV files or directories")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--snr-grid", help="comma-separated SNRs in dB (default -5..0)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("config", parents=[common], help="print or write the resolved config")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, ValueError, OSError, RuntimeError, KeyError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"dbtnet-error: {args.command}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
