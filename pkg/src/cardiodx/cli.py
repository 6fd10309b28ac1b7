"""Command-line front end.

Subcommands cover the full pipeline: simulate, locate, reconstruct,
monitor, diagnose, evaluate, train, gradcheck. Exit codes: 0 success,
2 input error, 3 numeric failure, 4 acceptance failure (evaluate only).
A master ``--seed`` (or the CARDIODX_SEED environment variable) drives
every random stream through fixed hash-derived per-stage seeds.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import cirio, pipeline
from .analysis import detect_peaks, hrv, monitoring_errors, rr_and_hr
from .core import (CardioDxError, InsufficientDataError, InvalidInputError,
                   NumericError, derive_seed)
from .hprnet import HprNet, HprNetConfig, load_checkpoint, save_checkpoint
from .ptl import PtlParams
from .training import TrainConfig, grad_check, train

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_ACCEPTANCE = 4


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file with default flag values")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (fallback: CARDIODX_SEED, then 0)")
    p.add_argument("--wt", type=int, default=200,
                   help="tracking window length in chirps")
    p.add_argument("--wb", type=int, default=9,
                   help="neighborhood breadth in range bins")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardiodx",
        description="Contactless arrhythmia monitoring on synthetic radar data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate labeled recording bundles")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--healthy", type=int, default=5)
    p.add_argument("--arrhythmia", type=int, default=5)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--profile", type=Path, action="append", default=None,
                   help="subject profile JSON; repeatable, replaces the "
                        "built-in factories")
    p.add_argument("--count", type=int, default=10,
                   help="bundles per --profile file")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("locate", help="run the bin tracker on one bundle")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("reconstruct", help="reconstruct the pulse waveform")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--mode", choices=pipeline.MODES, default="mcardiacdx")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plot", type=Path, default=None,
                   help="optional SVG of target vs reconstruction")
    _add_common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("monitor", help="HR/RR/HRV from a reconstruction")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--mode", choices=pipeline.MODES, default="mcardiacdx")
    p.add_argument("--oracle", action="store_true",
                   help="monitor the ground-truth waveform instead of the net")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--report", type=Path, default=None)
    p.add_argument("--peak-height", type=float, default=0.4)
    p.add_argument("--peak-refractory", type=float, default=0.3)
    _add_common(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("train", help="train a reconstruction network")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--mode", choices=pipeline.MODES, default="mcardiacdx")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--window-s", type=float, default=8.0)
    p.add_argument("--net", type=str, default=None,
                   help="JSON dict of HprNetConfig overrides")
    p.add_argument("--history", type=Path, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("diagnose", help="random-forest diagnosis experiment")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--mode", choices=pipeline.MODES, default="mcardiacdx")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--forest-out", type=Path, default=None)
    p.add_argument("--hrv-out", type=Path, default=None,
                   help="per-recording HRV feature CSV")
    p.add_argument("--hpw-only-training", action="store_true",
                   help="drop the ECG-derived rows from forest training")
    _add_common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("evaluate", help="three-system comparison table")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint-baseline", type=Path, required=True)
    p.add_argument("--checkpoint-baseline-ptl", type=Path, required=True)
    p.add_argument("--checkpoint-mcardiacdx", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-check", action="store_true",
                   help="skip the DTW-ordering acceptance check")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--out", type=Path, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _ptl_params(args) -> PtlParams:
    return PtlParams(w_t=args.wt, w_b=args.wb)


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header] + [",".join(str(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_simulate(args) -> int:
    templates = None
    if args.profile:
        from .synth import profile_from_dict

        templates = [(profile_from_dict(json.loads(Path(p).read_text())),
                      args.count) for p in args.profile]
    manifest = pipeline.simulate_dataset(
        args.out, args.healthy, args.arrhythmia, seed=args.seed,
        duration=args.duration, workers=args.workers, templates=templates)
    counts = {s: sum(1 for e in manifest["bundles"] if e["split"] == s)
              for s in ("train", "val", "test")}
    print(f"wrote {len(manifest['bundles'])} bundles to {args.out} "
          f"(split {counts})")
    return EXIT_OK


def cmd_locate(args) -> int:
    bundle = cirio.load_bundle(args.bundle)
    sel = pipeline.selection_for_mode(bundle.cir, "baseline_ptl",
                                      _ptl_params(args))
    _write_csv(args.out, "chirp,bin", list(enumerate(sel.bins)))
    print(f"wrote {sel.bins.size} selections to {args.out}")
    return EXIT_OK


def _load_hpw(args, bundle):
    if getattr(args, "oracle", False):
        return pipeline.target_for(bundle)
    if args.checkpoint is None:
        raise InvalidInputError("--checkpoint required unless --oracle")
    model = load_checkpoint(args.checkpoint)
    return pipeline.reconstruct_bundle(bundle, model, args.mode,
                                       _ptl_params(args))


def cmd_reconstruct(args) -> int:
    bundle = cirio.load_bundle(args.bundle)
    hpw = _load_hpw(args, bundle)
    _write_csv(args.out, "time_s,amplitude",
               [(f"{t:.6f}", f"{v:.6f}")
                for t, v in zip(hpw.times(), hpw.samples)])
    if args.plot is not None:
        _plot_hpw(bundle, hpw, args.plot)
    print(f"wrote {hpw.samples.size} samples to {args.out}")
    return EXIT_OK


def _plot_hpw(bundle, hpw, path: Path) -> None:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    target = pipeline.target_for(bundle)
    fig, ax = plt.subplots(figsize=(10, 3))
    ax.plot(target.times(), target.samples, label="target", alpha=0.7)
    ax.plot(hpw.times(), hpw.samples, label="reconstruction", alpha=0.7)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("amplitude")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_monitor(args) -> int:
    bundle = cirio.load_bundle(args.bundle)
    hpw = _load_hpw(args, bundle)
    peaks = detect_peaks(hpw, min_height=args.peak_height,
                         refractory=args.peak_refractory)
    if peaks.size < 2:
        raise InsufficientDataError(
            f"only {peaks.size} peaks detected; cannot monitor")
    rr_ms, hr = rr_and_hr(peaks)
    rows = [("rr", f"{t:.3f}", f"{v:.3f}") for t, v in zip(peaks[1:], rr_ms)]
    rows += [("hr", f"{float(k):.3f}", f"{v:.3f}")
             for k, v in enumerate(hr) if np.isfinite(v)]
    _write_csv(args.out, "kind,time_s,value", rows)

    features = hrv(rr_ms)
    report = {"hrv": dataclasses.asdict(features),
              "n_peaks": int(peaks.size),
              **monitoring_errors(peaks, bundle.r_peaks, bundle.duration)}
    text = json.dumps(report, indent=1)
    if args.report is not None:
        Path(args.report).write_text(text)
    print(text)
    return EXIT_OK


def _load_dataset_splits(args):
    train_bundles = pipeline.load_split(args.dataset, "train")
    val_bundles = pipeline.load_split(args.dataset, "val")
    test_bundles = pipeline.load_split(args.dataset, "test")
    return train_bundles, val_bundles, test_bundles


def cmd_train(args) -> int:
    train_bundles, val_bundles, _ = _load_dataset_splits(args)
    if not train_bundles:
        raise InvalidInputError("dataset has no training bundles")
    params = _ptl_params(args)
    dataset = pipeline.build_dataset(train_bundles, args.mode, params)
    val = pipeline.build_dataset(val_bundles, args.mode, params) or None
    overrides = json.loads(args.net) if args.net else {}
    if "encoder_channels" in overrides:
        overrides["encoder_channels"] = tuple(overrides["encoder_channels"])
    net_config = HprNetConfig(**overrides)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.lr, window_s=args.window_s,
                      seed=derive_seed(args.seed, "train", args.mode))
    model, history = train(dataset, cfg, net_config, val_dataset=val)
    save_checkpoint(model, args.out)
    if args.history is not None:
        _write_csv(args.history, "epoch,train_mse,val_mse",
                   [(h["epoch"], f"{h['train_mse']:.8f}",
                     f"{h.get('val_mse', float('nan')):.8f}") for h in history])
    print(f"trained {args.mode} for {len(history)} epochs; "
          f"final train MSE {history[-1]['train_mse']:.6f}; "
          f"checkpoint {args.out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    train_bundles, val_bundles, test_bundles = _load_dataset_splits(args)
    model = load_checkpoint(args.checkpoint)
    params = _ptl_params(args)
    fit_bundles = train_bundles + val_bundles
    fit_hpws = [pipeline.reconstruct_bundle(b, model, args.mode, params)
                for b in fit_bundles]
    test_hpws = [pipeline.reconstruct_bundle(b, model, args.mode, params)
                 for b in test_bundles]
    from .forest import ForestConfig

    report, forest = pipeline.diagnosis_experiment(
        fit_bundles, test_bundles, fit_hpws, test_hpws,
        ForestConfig(seed=derive_seed(args.seed, "forest", args.mode)),
        include_ecg_rows=not args.hpw_only_training)
    Path(args.out).write_text(report.to_json())
    if args.forest_out is not None:
        Path(args.forest_out).write_text(forest.to_json())
    if args.hrv_out is not None:
        from .analysis import HrvFeatures

        rows = []
        for split, bundles, hpws in (("fit", fit_bundles, fit_hpws),
                                     ("test", test_bundles, test_hpws)):
            for bundle, hpw in zip(bundles, hpws):
                peaks = detect_peaks(hpw)
                vec = pipeline.hrv_row(peaks)
                rows.append((split, bundle.label,
                             *(f"{v:.4f}" for v in vec)))
        _write_csv(args.hrv_out,
                   "split,label," + ",".join(HrvFeatures.names()), rows)
    print(report.to_json())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    train_bundles, val_bundles, test_bundles = _load_dataset_splits(args)
    models = {
        "baseline": load_checkpoint(args.checkpoint_baseline),
        "baseline_ptl": load_checkpoint(args.checkpoint_baseline_ptl),
        "mcardiacdx": load_checkpoint(args.checkpoint_mcardiacdx),
    }
    results = pipeline.evaluate_modes(
        train_bundles + val_bundles, test_bundles, models, _ptl_params(args),
        forest_seed=args.seed)
    doc = {}
    for mode, res in results.items():
        doc[mode] = {
            "cohorts": res["cohorts"],
            "diagnosis": dataclasses.asdict(res["diagnosis"]),
            "per_bundle": res["per_bundle"],
        }
    Path(args.out).write_text(json.dumps(doc, indent=1))
    for mode in pipeline.MODES:
        for label, stats in doc[mode]["cohorts"].items():
            print(f"{mode:13s} {label:10s} median_dtw={stats['median_dtw']:.4f} "
                  f"hr_medape={stats['hr_medape']:.3f}% "
                  f"rr_medape={stats['rr_medape']:.3f}%")

    if not args.no_check:
        arr = {m: doc[m]["cohorts"].get("arrhythmia", {}).get("median_dtw")
               for m in pipeline.MODES}
        if None in arr.values():
            raise InvalidInputError("arrhythmia cohort missing from test set")
        ordered = (arr["mcardiacdx"] <= arr["baseline_ptl"] <= arr["baseline"])
        if not ordered:
            print(f"acceptance check failed: DTW ordering violated {arr}",
                  file=sys.stderr)
            return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    import torch

    torch.manual_seed(derive_seed(args.seed, "gradcheck-model"))
    config = HprNetConfig(extractor_channels=4, extractor_blocks=1,
                          kernel_size=5, gat_dim=4, encoder_channels=(4, 8),
                          lstm_hidden=8, head_hidden=8)
    model = HprNet(config)
    rng = np.random.default_rng(derive_seed(args.seed, "gradcheck-data"))
    x = rng.standard_normal((3, 32, 3))
    y = rng.uniform(0.1, 0.9, size=32)
    result = grad_check(model, (x, y), epsilon=args.epsilon, seed=args.seed)
    passed = result["max_rel_error"] < 1e-3
    doc = {"passed": bool(passed), **result}
    text = json.dumps(doc, indent=1)
    if args.out is not None:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK if passed else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    try:
        # First pass finds --config; its values become parser defaults, so
        # flags given explicitly on the command line still win.
        probe, _ = parser.parse_known_args(argv)
        if getattr(probe, "config", None) is not None:
            defaults = json.loads(Path(probe.config).read_text())
            parser.set_defaults(**{k.replace("-", "_"): v
                                   for k, v in defaults.items()})
        args = parser.parse_args(argv)
        if args.seed is None:
            args.seed = int(os.environ.get("CARDIODX_SEED", "0"))
        return args.func(args)
    except (InvalidInputError, InsufficientDataError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CardioDxError as exc:
        if isinstance(exc, NumericError):
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
