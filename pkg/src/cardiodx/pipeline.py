"""Pipeline orchestration: the three systems under comparison.

``baseline`` feeds the network the single most-common bin with no tracking,
``baseline_ptl`` follows the tracker's per-chirp bin selection (still one
bin), ``mcardiacdx`` feeds the whole tracked neighborhood. Helpers here
assemble datasets, run reconstructions, score them and drive the diagnosis
experiment; the CLI is a thin wrapper over these functions.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cirio
from .analysis import (DiagnosisReport, classification_metrics, detect_peaks,
                       dtw, hrv, monitoring_errors, roc_auc, zncc)
from .core import (BinSelection, CirMatrix, Hpw, InsufficientDataError,
                   InvalidInputError, RadarConfig, RecordingBundle,
                   derive_seed, magnitude)
from .forest import ForestConfig, ForestModel, rf_predict, rf_train
from .hprnet import HprNet, reconstruct
from .ptl import PtlParams, most_common_bin, ptl
from .sigproc import FeatureBlock, build_features, build_tracked_features
from .synth import (RPeakTrain, arrhythmia_profile, gen_cir, gen_hpw_target,
                    healthy_profile)

MODES = ("baseline", "baseline_ptl", "mcardiacdx")
LABEL_TO_INT = {"healthy": 0, "arrhythmia": 1}


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "mcardiacdx"
    ptl_params: PtlParams = field(default_factory=PtlParams)
    checkpoint: str | None = None
    peak_height: float = 0.4
    peak_refractory: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}")


def selection_for_mode(cir: CirMatrix, mode: str,
                       params: PtlParams) -> BinSelection:
    if mode == "baseline":
        bin_idx = most_common_bin(magnitude(cir))
        return BinSelection(bins=np.full(cir.num_chirps, bin_idx))
    return ptl(cir, params)


def features_for_mode(cir: CirMatrix, mode: str,
                      params: PtlParams) -> FeatureBlock:
    sel = selection_for_mode(cir, mode, params)
    if mode == "mcardiacdx":
        return build_features(cir, sel, params)
    return build_tracked_features(cir, sel)


def target_for(bundle: RecordingBundle) -> Hpw:
    return gen_hpw_target(RPeakTrain(times=bundle.r_peaks),
                          rate=bundle.cir.config.processing_rate,
                          duration=bundle.duration)


def reconstruct_bundle(bundle: RecordingBundle, model: HprNet, mode: str,
                       params: PtlParams) -> Hpw:
    return reconstruct(features_for_mode(bundle.cir, mode, params), model)


def build_dataset(bundles: list[RecordingBundle], mode: str,
                  params: PtlParams) -> list[tuple[FeatureBlock, Hpw]]:
    return [(features_for_mode(b.cir, mode, params), target_for(b))
            for b in bundles]


# ---------------------------------------------------------------------------
# Simulation manifests

def _simulate_one(args) -> dict:
    profile, config, duration, out_dir, name = args
    bundle = gen_cir(profile, config, duration)
    cirio.save_bundle(bundle, Path(out_dir) / name)
    return {"dir": name, "label": bundle.label, "seed": profile.seed}


def simulate_dataset(out_dir, count_healthy: int, count_arrhythmia: int,
                     seed: int, duration: float = 60.0,
                     config: RadarConfig | None = None, workers: int = 1,
                     profile_overrides: dict | None = None,
                     templates: list | None = None) -> dict:
    """Generate a labeled bundle dataset with a stratified 60/20/20 split.

    Without ``templates``, subjects come from the seeded profile factories
    (count_healthy / count_arrhythmia of each). With ``templates`` (a list of
    (SubjectProfile, count) pairs, e.g. loaded from profile JSON files), each
    template is replicated with per-bundle derived seeds instead.
    """
    config = config or RadarConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    overrides = profile_overrides or {}
    jobs = []
    if templates:
        counters = {"healthy": 0, "arrhythmia": 0}
        for template, count in templates:
            for _ in range(count):
                i = counters[template.kind]
                counters[template.kind] += 1
                profile = dataclasses.replace(
                    template,
                    seed=derive_seed(seed, "subject", template.kind[0], i))
                jobs.append((profile, config, duration, out_dir,
                             f"{template.kind}_{i:03d}"))
    else:
        for i in range(count_healthy):
            profile = healthy_profile(derive_seed(seed, "subject", "h", i),
                                      **overrides.get("healthy", {}))
            jobs.append((profile, config, duration, out_dir,
                         f"healthy_{i:03d}"))
        for i in range(count_arrhythmia):
            profile = arrhythmia_profile(derive_seed(seed, "subject", "a", i),
                                         **overrides.get("arrhythmia", {}))
            jobs.append((profile, config, duration, out_dir,
                         f"arrhythmia_{i:03d}"))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_simulate_one, jobs))
    else:
        entries = [_simulate_one(job) for job in jobs]

    for label in ("healthy", "arrhythmia"):
        idx = [i for i, e in enumerate(entries) if e["label"] == label]
        rng = np.random.default_rng(derive_seed(seed, "split", label))
        order = rng.permutation(idx)
        n = len(order)
        n_train, n_val = int(round(0.6 * n)), int(round(0.2 * n))
        for j, i in enumerate(order):
            entries[i]["split"] = ("train" if j < n_train else
                                   "val" if j < n_train + n_val else "test")

    manifest = {"version": 1, "seed": seed, "duration": duration,
                "bundles": entries}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def load_manifest(dataset_dir) -> dict:
    return json.loads((Path(dataset_dir) / "manifest.json").read_text())


def load_split(dataset_dir, split: str) -> list[RecordingBundle]:
    manifest = load_manifest(dataset_dir)
    return [cirio.load_bundle(Path(dataset_dir) / e["dir"])
            for e in manifest["bundles"] if e["split"] == split]


# ---------------------------------------------------------------------------
# Alignment diagnostic (the C2 phenomenon)

def acceleration_envelope(acc: np.ndarray, rate: float,
                          sigma: float = 0.02) -> np.ndarray:
    """Smoothed acceleration energy; even around each beat center, so its
    correlation with the Gaussian target peaks at zero lag when aligned."""
    half = max(1, int(round(3.0 * sigma * rate)))
    t = np.arange(-half, half + 1) / rate
    kernel = np.exp(-t * t / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    return np.convolve(acc * acc, kernel, mode="same")


def alignment_curve(bundle: RecordingBundle, params: PtlParams | None = None,
                    max_lag_s: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """ZNCC-vs-lag between tracked-bin acceleration energy and the target."""
    params = params or PtlParams()
    rate = bundle.cir.config.processing_rate
    sel = ptl(bundle.cir, params)
    block = build_tracked_features(bundle.cir, sel)
    env = acceleration_envelope(block.channels[0, :, 1], rate)
    target = target_for(bundle)
    max_lag = int(round(max_lag_s * rate))
    curve = zncc(env, target.samples, max_lag)
    lags = (np.arange(curve.size) - max_lag) / rate
    return lags, curve


def cardiac_alignment(bundle: RecordingBundle,
                      params: PtlParams | None = None,
                      max_lag_s: float = 0.5) -> float:
    """Peak ZNCC between the tracked acceleration envelope and the target."""
    _, curve = alignment_curve(bundle, params, max_lag_s)
    return float(np.max(curve))


# ---------------------------------------------------------------------------
# Scoring

def score_reconstruction(bundle: RecordingBundle, hpw: Hpw,
                         peak_height: float = 0.4,
                         peak_refractory: float = 0.3) -> dict:
    """DTW against the target plus HR/RR MedAPE for one recording."""
    target = target_for(bundle)
    out = {"dtw": dtw(hpw.samples, target.samples),
           "label": bundle.label,
           "hr_medape": float("nan"), "rr_medape": float("nan")}
    peaks = detect_peaks(hpw, min_height=peak_height, refractory=peak_refractory)
    try:
        errors = monitoring_errors(peaks, bundle.r_peaks, bundle.duration)
        out.update(errors)
    except InsufficientDataError:
        pass
    out["n_peaks"] = int(peaks.size)
    return out


def hrv_row(peak_times: np.ndarray) -> np.ndarray:
    """HRV feature vector from beat times; all-zero when beats are missing,
    so failed reconstructions still yield a representable row."""
    if np.asarray(peak_times).size < 3:
        return np.zeros(6)
    rr_ms = np.diff(np.asarray(peak_times)) * 1000.0
    return hrv(rr_ms).as_vector()


def diagnosis_experiment(train_bundles: list[RecordingBundle],
                         test_bundles: list[RecordingBundle],
                         train_hpws: list[Hpw], test_hpws: list[Hpw],
                         forest_cfg: ForestConfig = ForestConfig(),
                         include_ecg_rows: bool = True,
                         peak_height: float = 0.4,
                         peak_refractory: float = 0.3,
                         ) -> tuple[DiagnosisReport, ForestModel]:
    """Train the forest on HRV rows and score the held-out reconstructions.

    Training rows combine ground-truth beat trains (the ECG surrogate) with
    reconstructed-waveform rows of the training bundles; testing uses only
    reconstructed rows, mirroring how the deployed system sees data.
    """
    rows, labels = [], []
    for bundle, hpw in zip(train_bundles, train_hpws):
        label = LABEL_TO_INT[bundle.label]
        if include_ecg_rows:
            rows.append(hrv_row(bundle.r_peaks))
            labels.append(label)
        peaks = detect_peaks(hpw, peak_height, peak_refractory)
        rows.append(hrv_row(peaks))
        labels.append(label)
    model = rf_train(np.asarray(rows), np.asarray(labels), forest_cfg)

    tp = fp = tn = fn = 0
    scores, true = [], []
    for bundle, hpw in zip(test_bundles, test_hpws):
        peaks = detect_peaks(hpw, peak_height, peak_refractory)
        pred, score = rf_predict(model, hrv_row(peaks))
        label = LABEL_TO_INT[bundle.label]
        scores.append(score)
        true.append(label)
        tp += pred == 1 and label == 1
        fp += pred == 1 and label == 0
        tn += pred == 0 and label == 0
        fn += pred == 0 and label == 1
    report = classification_metrics(tp, fp, tn, fn)
    report.roc_auc = roc_auc(np.asarray(scores), np.asarray(true))
    return report, model


def _nanmedian(values) -> float:
    arr = np.asarray(values, dtype=np.float64)
    finite = arr[~np.isnan(arr)]
    return float(np.median(finite)) if finite.size else float("nan")


def evaluate_modes(train_bundles: list[RecordingBundle],
                   test_bundles: list[RecordingBundle],
                   models: dict[str, HprNet], params: PtlParams,
                   forest_seed: int = 0, peak_height: float = 0.4,
                   peak_refractory: float = 0.3) -> dict:
    """Full comparison table across the three systems.

    Returns {mode: {"per_bundle": [...], "cohorts": {label: medians},
    "diagnosis": DiagnosisReport}}.
    """
    results: dict[str, dict] = {}
    for mode, model in models.items():
        train_hpws = [reconstruct_bundle(b, model, mode, params)
                      for b in train_bundles]
        test_hpws = [reconstruct_bundle(b, model, mode, params)
                     for b in test_bundles]
        per_bundle = [score_reconstruction(b, h, peak_height, peak_refractory)
                      for b, h in zip(test_bundles, test_hpws)]
        cohorts = {}
        for label in ("healthy", "arrhythmia"):
            rows = [r for r in per_bundle if r["label"] == label]
            if rows:
                cohorts[label] = {
                    "median_dtw": float(np.median([r["dtw"] for r in rows])),
                    "hr_medape": _nanmedian([r["hr_medape"] for r in rows]),
                    "rr_medape": _nanmedian([r["rr_medape"] for r in rows]),
                    "count": len(rows),
                }
        report, _ = diagnosis_experiment(
            train_bundles, test_bundles, train_hpws, test_hpws,
            ForestConfig(seed=derive_seed(forest_seed, "forest", mode)),
            peak_height=peak_height, peak_refractory=peak_refractory)
        results[mode] = {"per_bundle": per_bundle, "cohorts": cohorts,
                         "diagnosis": report}
    return results
