"""Monitoring and evaluation analytics.

Peak detection turns reconstructed waveforms into beat times; RR/HR/HRV
summarize them; DTW, MedAPE, ZNCC and the confusion-matrix metrics quantify
reconstruction, estimation and diagnosis quality.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numba
import numpy as np
from scipy import signal as sp_signal
from scipy import stats as sp_stats

from .core import Hpw, InsufficientDataError, InvalidInputError

HR_WINDOW = 10.0  # s, sliding window for heart-rate estimates
HR_HOP = 1.0  # s
# Normal-consistency constant making MAD comparable to a Gaussian SD.
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class HrvFeatures:
    """The six RR-interval dispersion metrics used for diagnosis (ms-based)."""

    mean_nn: float
    median_nn: float
    sdnn: float
    iqr_nn: float
    mad_nn: float
    mad_over_median: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.mean_nn, self.median_nn, self.sdnn,
                         self.iqr_nn, self.mad_nn, self.mad_over_median])

    @staticmethod
    def names() -> tuple[str, ...]:
        return ("mean_nn", "median_nn", "sdnn", "iqr_nn", "mad_nn",
                "mad_over_median")


@dataclass
class DiagnosisReport:
    """Confusion counts plus the §-standard derived metrics."""

    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)


def detect_peaks(hpw: Hpw, min_height: float = 0.4,
                 refractory: float = 0.3) -> np.ndarray:
    """Beat times (s): local maxima above min_height, at least one
    refractory period apart. When candidates conflict the higher one wins;
    equal heights go to the earlier candidate."""
    if refractory <= 0:
        raise InvalidInputError("refractory must be positive")
    x = hpw.samples
    if x.size < 3:
        return np.empty(0)
    idx, props = sp_signal.find_peaks(x, height=min_height)
    if idx.size == 0:
        return np.empty(0)
    order = np.lexsort((idx, -props["peak_heights"]))
    accepted: list[int] = []
    min_gap = refractory * hpw.rate
    for k in order:
        i = idx[k]
        if all(abs(i - j) >= min_gap for j in accepted):
            accepted.append(i)
    return np.sort(np.asarray(accepted)) / hpw.rate


def rr_and_hr(peaks, window_s: float = HR_WINDOW,
              hop_s: float = HR_HOP) -> tuple[np.ndarray, np.ndarray]:
    """RR intervals (ms) and sliding-window HR (bpm).

    HR windows start at t=0 and advance by ``hop_s`` while they fit before
    the last peak; each window averages the RR intervals whose midpoints
    fall inside it (NaN when none do).
    """
    peaks = np.asarray(peaks, dtype=np.float64)
    if peaks.size < 2:
        raise InsufficientDataError("need at least two peaks")
    rr_ms = np.diff(peaks) * 1000.0
    hr = _hr_series(peaks, peaks[-1], window_s, hop_s)
    return rr_ms, hr


def _hr_series(peaks: np.ndarray, t_end: float, window_s: float,
               hop_s: float) -> np.ndarray:
    rr = np.diff(peaks)
    mids = peaks[:-1] + rr / 2.0
    if t_end < window_s:
        # Recording shorter than the window: one window spans all of it.
        starts, window_s = np.zeros(1), t_end
    else:
        starts = np.arange(0.0, t_end - window_s + 1e-9, hop_s)
    out = np.full(starts.size, np.nan)
    for k, w in enumerate(starts):
        m = (mids >= w) & (mids < w + window_s)
        if np.any(m):
            out[k] = 60000.0 / np.mean(rr[m] * 1000.0)
    return out


def hrv(rr_ms) -> HrvFeatures:
    """Six dispersion metrics over RR intervals in milliseconds."""
    rr = np.asarray(rr_ms, dtype=np.float64)
    if rr.size < 2:
        raise InsufficientDataError("need at least two RR intervals")
    if np.any(rr <= 0):
        raise InvalidInputError("RR intervals must be positive")
    med = float(np.median(rr))
    mad = MAD_SCALE * float(np.median(np.abs(rr - med)))
    q25, q75 = np.percentile(rr, [25.0, 75.0])
    return HrvFeatures(
        mean_nn=float(np.mean(rr)),
        median_nn=med,
        sdnn=float(np.std(rr, ddof=1)),
        iqr_nn=float(q75 - q25),
        mad_nn=mad,
        mad_over_median=mad / med,
    )


@numba.njit(cache=True)
def _dtw_kernel(a, b):  # pragma: no cover - exercised through dtw()
    n, m = a.shape[0], b.shape[0]
    prev_cost = np.empty(m)
    prev_len = np.zeros(m, dtype=np.int64)
    cur_cost = np.empty(m)
    cur_len = np.zeros(m, dtype=np.int64)
    for j in range(m):
        d = abs(a[0] - b[j])
        if j == 0:
            prev_cost[j] = d
            prev_len[j] = 1
        else:
            prev_cost[j] = prev_cost[j - 1] + d
            prev_len[j] = prev_len[j - 1] + 1
    for i in range(1, n):
        for j in range(m):
            d = abs(a[i] - b[j])
            # Lexicographic (cost, path length) minimum over predecessors
            # keeps the normalized score symmetric in its arguments.
            bc, bl = prev_cost[j], prev_len[j]
            if j > 0:
                if prev_cost[j - 1] < bc or (prev_cost[j - 1] == bc
                                             and prev_len[j - 1] < bl):
                    bc, bl = prev_cost[j - 1], prev_len[j - 1]
                if cur_cost[j - 1] < bc or (cur_cost[j - 1] == bc
                                            and cur_len[j - 1] < bl):
                    bc, bl = cur_cost[j - 1], cur_len[j - 1]
            cur_cost[j] = bc + d
            cur_len[j] = bl + 1
        for j in range(m):
            prev_cost[j] = cur_cost[j]
            prev_len[j] = cur_len[j]
    return prev_cost[m - 1], prev_len[m - 1]


def dtw(a, b) -> float:
    """Dynamic-time-warping distance, |.| point cost, unconstrained path,
    normalized by the length of the optimal warping path."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise InvalidInputError("dtw inputs must be non-empty 1-D series")
    cost, length = _dtw_kernel(a, b)
    return float(cost) / float(length)


def medape(est, truth) -> float:
    """Median absolute percentage error, in percent."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape or est.ndim != 1 or est.size == 0:
        raise InvalidInputError("medape needs equal-length non-empty series")
    if np.any(truth == 0):
        raise InvalidInputError("truth values must be non-zero")
    return float(np.median(100.0 * np.abs(est - truth) / np.abs(truth)))


def zncc(a, b, max_lag: int) -> np.ndarray:
    """Zero-normalized cross-correlation over lags -max_lag..+max_lag.

    Entry k (0-based) holds the Pearson correlation between ``a[t]`` and
    ``b[t + (k - max_lag)]`` over the overlapping samples, so a positive
    peak lag means features of ``b`` trail those of ``a``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise InvalidInputError("zncc inputs must be 1-D")
    if max_lag < 0:
        raise InvalidInputError("max_lag must be non-negative")
    out = np.empty(2 * max_lag + 1)
    for k, lag in enumerate(range(-max_lag, max_lag + 1)):
        if lag >= 0:
            xa, xb = a[:a.size - lag or None], b[lag:lag + a.size]
        else:
            xa, xb = a[-lag:], b[:a.size + lag]
        n = min(xa.size, xb.size)
        xa, xb = xa[:n], xb[:n]
        if n < 2:
            raise InvalidInputError(f"overlap too short at lag {lag}")
        sa, sb = xa.std(), xb.std()
        if sa == 0 or sb == 0:
            raise InvalidInputError(f"zero-variance window at lag {lag}")
        out[k] = float(np.mean((xa - xa.mean()) * (xb - xb.mean())) / (sa * sb))
    return out


def classification_metrics(tp: int, fp: int, tn: int, fn: int) -> DiagnosisReport:
    """Standard binary metrics from confusion counts (arrhythmia positive)."""
    counts = (tp, fp, tn, fn)
    if any(c < 0 for c in counts):
        raise InvalidInputError("confusion counts must be non-negative")
    total = sum(counts)
    if total == 0:
        raise InvalidInputError("confusion counts are all zero")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2.0 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return DiagnosisReport(tp=tp, fp=fp, tn=tn, fn=fn,
                           accuracy=(tp + tn) / total,
                           precision=precision, recall=recall, f1=f1)


def roc_auc(scores, labels) -> float:
    """Rank-statistic AUC: probability a positive outranks a negative,
    counting ties as one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise InvalidInputError("scores and labels must be equal-length 1-D")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("AUC needs both classes present")
    ranks = sp_stats.rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def monitoring_errors(est_peaks, true_peaks, duration: float,
                      window_s: float = HR_WINDOW,
                      hop_s: float = HR_HOP) -> dict[str, float]:
    """HR and RR MedAPE of estimated beat times against ground truth.

    HR compares sliding-window series on a common grid over the recording.
    RR compares the two tachograms as step functions sampled once per
    second, which pairs the series without requiring one-to-one beat
    matching. Identical peak trains give exactly zero on both.
    """
    est_peaks = np.asarray(est_peaks, dtype=np.float64)
    true_peaks = np.asarray(true_peaks, dtype=np.float64)
    if est_peaks.size < 2 or true_peaks.size < 2:
        raise InsufficientDataError("need two peaks in both trains")
    hr_est = _hr_series(est_peaks, duration, window_s, hop_s)
    hr_true = _hr_series(true_peaks, duration, window_s, hop_s)
    ok = ~(np.isnan(hr_est) | np.isnan(hr_true))
    if not np.any(ok):
        raise InsufficientDataError("no common HR windows")
    hr_medape = medape(hr_est[ok], hr_true[ok])

    grid = np.arange(0.5, duration, 1.0)
    rr_est = _tachogram(est_peaks, grid)
    rr_true = _tachogram(true_peaks, grid)
    ok = ~(np.isnan(rr_est) | np.isnan(rr_true))
    if not np.any(ok):
        raise InsufficientDataError("no common RR samples")
    return {"hr_medape": hr_medape,
            "rr_medape": medape(rr_est[ok], rr_true[ok])}


def _tachogram(peaks: np.ndarray, grid: np.ndarray) -> np.ndarray:
    rr = np.diff(peaks) * 1000.0
    idx = np.searchsorted(peaks, grid, side="right") - 1
    out = np.full(grid.size, np.nan)
    valid = (idx >= 0) & (idx < rr.size)
    out[valid] = rr[idx[valid]]
    return out
