#!/usr/bin/env python3
"""End-to-end synthetic comparison of baseline / baseline+tracking / full.

Drives the cardiodx CLI: simulates a labeled dataset, trains the three
reconstruction networks, and writes the comparison table (DTW, HR/RR
MedAPE, diagnosis metrics). Sized for a small CPU box; expect ~10 minutes
with the defaults.

Usage:
    python scripts/run_synthetic_eval.py --out runs/demo [--seed 7]
"""

import argparse
import json
import sys
from pathlib import Path

from cardiodx.cli import main as cardiodx

TOY_NET = json.dumps({
    "extractor_channels": 4, "extractor_blocks": 1, "kernel_size": 5,
    "gat_dim": 8, "encoder_channels": [8, 8, 16], "lstm_hidden": 8,
    "head_hidden": 16,
})


def run(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = out / "dataset"
    common = ["--seed", str(args.seed), "--wt", "100", "--wb", "5"]

    if not (dataset / "manifest.json").exists():
        code = cardiodx(["simulate", "--out", str(dataset),
                         "--healthy", str(args.healthy),
                         "--arrhythmia", str(args.arrhythmia),
                         "--duration", str(args.duration), *common])
        if code:
            return code

    checkpoints = {}
    for mode in ("baseline", "baseline_ptl", "mcardiacdx"):
        ckpt = out / f"{mode}.ckpt"
        checkpoints[mode] = ckpt
        if ckpt.exists():
            continue
        code = cardiodx(["train", "--dataset", str(dataset), "--mode", mode,
                         "--out", str(ckpt), "--epochs", str(args.epochs),
                         "--batch-size", "90", "--lr", "2.5e-3",
                         "--window-s", "3.0", "--net", TOY_NET,
                         "--history", str(out / f"{mode}_history.csv"),
                         *common])
        if code:
            return code

    return cardiodx(["evaluate", "--dataset", str(dataset),
                     "--checkpoint-baseline", str(checkpoints["baseline"]),
                     "--checkpoint-baseline-ptl",
                     str(checkpoints["baseline_ptl"]),
                     "--checkpoint-mcardiacdx",
                     str(checkpoints["mcardiacdx"]),
                     "--out", str(out / "comparison.json"), *common])


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/demo")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--healthy", type=int, default=30)
    parser.add_argument("--arrhythmia", type=int, default=30)
    parser.add_argument("--duration", type=float, default=12.0)
    parser.add_argument("--epochs", type=int, default=200)
    sys.exit(run(parser.parse_args()))
