"""
The same workflow from the command line
=======================================

Every library capability is reachable through the ``dbtnet`` command. This script
drives it with subprocess calls so the exact invocations are visible.
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import yaml

from dbtnet.synth import write_corpus

root = Path(tempfile.mkdtemp(prefix="dbtnet_cli_"))
write_corpus(root / "data", 6, 2.0, 1, 20.0, seed=3)


def dbtnet(*args):
    cmd = [sys.executable, "-m", "dbtnet.cli", *map(str, args)]
    print("$ dbtnet", " ".join(map(str, args)))
    subprocess.run(cmd, check=True)


dbtnet("pairs", "--clean", root / "data" / "clean", "--noise", root / "data" / "noise",
       "--count", 6, "--out", root / "pairs.jsonl", "--seed", 1)

config = {
    "model": {"channels": 16, "heads": 2, "n_atfat": 1, "ffn_dim": 16, "dilations": [1, 2]},
    "train": {"max_steps": 20, "batch_size": 4, "chunk_seconds": 1.0},
    "paths": {"train_manifest": str(root / "pairs.jsonl"), "workdir": str(root / "run")},
}
(root / "run.yaml").write_text(yaml.safe_dump(config))

dbtnet("train", "--config", root / "run.yaml", "--seed", 0)
dbtnet("enhance", "--checkpoint", root / "run" / "last.pt", "--input", root / "data" / "clean",
       "--output-dir", root / "enhanced")
dbtnet("evaluate", "--checkpoint", root / "run" / "last.pt", "--manifest", root / "pairs.jsonl",
       "--metrics", "si_sdr,segsnr", "--report", root / "scores.json")
dbtnet("audit", "--rows", "DBT-Net(5),DBT-Net(D=2)")
dbtnet("plot", root / "data" / "clean" / "utt0000.wav", root / "enhanced" / "utt0000.wav",
       "--titles", "input,output", "--out", root / "spectrograms.png")
print("artifacts in", root)
