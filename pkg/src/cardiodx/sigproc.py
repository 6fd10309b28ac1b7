"""Signal conditioning between the bin tracker and the network.

Each range bin contributes three channels: bandpass-filtered phase, the
seven-point second derivative of that phase (chest acceleration, which
separates heartbeats from slow respiratory motion), and bandpass-filtered
magnitude. Channels are z-scored per recording before they reach the
network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .core import (BinSelection, CirMatrix, InvalidInputError, magnitude,
                   unwrap_phase)
from .ptl import PtlParams, most_common_bin, neighborhood

CHANNEL_NAMES = ("phase_bp", "phase_d2", "mag_bp")

BAND_LO = 0.2  # Hz, clutter filter band
BAND_HI = 50.0

# Smooth-noise-robust second derivative, offsets -3..+3, denominator 16 h^2.
_D2_KERNEL = np.array([1.0, 2.0, -1.0, -4.0, -1.0, 2.0, 1.0])


def bandpass(x, lo: float, hi: float, rate: float) -> np.ndarray:
    """Zero-phase Butterworth bandpass (4th-order design, forward-backward)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("bandpass input must be 1-D")
    if not 0.0 < lo < hi < rate / 2.0:
        raise InvalidInputError(
            f"band ({lo}, {hi}) must satisfy 0 < lo < hi < rate/2")
    sos = signal.butter(4, [lo, hi], btype="band", fs=rate, output="sos")
    padlen = 3 * (2 * sos.shape[0] + 1)
    if x.size <= padlen:
        raise InvalidInputError(
            f"series of length {x.size} too short for the filter (needs "
            f"> {padlen})")
    return signal.sosfiltfilt(sos, x)


def second_derivative(phi, h: float) -> np.ndarray:
    """Seven-point second-derivative filter, exact on quadratics.

    Interior samples use the stencil
    [(x[t-3]+x[t+3]) + 2(x[t-2]+x[t+2]) - (x[t-1]+x[t+1]) - 4x[t]] / (16 h^2);
    the first and last three samples are computed on an edge-replicated
    extension.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 1 or phi.size < 7:
        raise InvalidInputError("second_derivative needs >= 7 samples")
    if h <= 0:
        raise InvalidInputError("sampling interval must be positive")
    padded = np.pad(phi, 3, mode="edge")
    return np.convolve(padded, _D2_KERNEL, mode="valid") / (16.0 * h * h)


@dataclass
class FeatureBlock:
    """Per-bin network input channels, shape (num_bins, num_steps, 3).

    ``bin_offsets`` index the rows relative to the start of the tracked
    neighborhood; a single-bin block from a tracked selection uses offset 0.
    """

    channels: np.ndarray
    bin_offsets: np.ndarray
    rate: float

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        self.bin_offsets = np.asarray(self.bin_offsets, dtype=np.int64)
        if self.channels.ndim != 3 or self.channels.shape[2] != len(CHANNEL_NAMES):
            raise InvalidInputError(
                "channels must have shape (bins, steps, 3)")
        if self.bin_offsets.shape != (self.channels.shape[0],):
            raise InvalidInputError("bin_offsets must match the bin axis")
        if not np.all(np.isfinite(self.channels)):
            raise InvalidInputError("feature channels must be finite")
        if self.rate <= 0:
            raise InvalidInputError("rate must be positive")

    @property
    def num_bins(self) -> int:
        return self.channels.shape[0]

    @property
    def num_steps(self) -> int:
        return self.channels.shape[1]


def _zscore(x: np.ndarray) -> np.ndarray:
    # Zero-variance channels stay at zero instead of dividing by ~0.
    sd = x.std()
    if sd < 1e-12 * max(1.0, abs(float(x.mean()))) or sd == 0.0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def _raw_channels(phase: np.ndarray, mag: np.ndarray,
                  rate: float) -> np.ndarray:
    # Degenerate (constant) series yield all-zero channels directly; filter
    # roundoff on a constant would otherwise be amplified by the second
    # derivative and then z-scored up to unit variance.
    if phase.std() < 1e-9:
        phase_bp = np.zeros_like(phase)
        phase_d2 = np.zeros_like(phase)
    else:
        phase_bp = bandpass(phase, BAND_LO, BAND_HI, rate)
        phase_d2 = second_derivative(phase_bp, 1.0 / rate)
    if mag.std() < 1e-9 * max(1.0, float(np.abs(mag).max())):
        mag_bp = np.zeros_like(mag)
    else:
        mag_bp = bandpass(mag, BAND_LO, BAND_HI, rate)
    return np.stack([phase_bp, phase_d2, mag_bp], axis=-1)


def _zscore_per_channel(stacked: np.ndarray) -> np.ndarray:
    # Statistics are shared across bins (per channel, per recording) so the
    # relative amplitude between bins survives normalization; that contrast
    # is what tells the attention layer which bin currently carries signal.
    out = np.empty_like(stacked)
    for c in range(stacked.shape[-1]):
        out[..., c] = _zscore(stacked[..., c])
    return out


def build_features(cir: CirMatrix, sel: BinSelection,
                   params: PtlParams) -> FeatureBlock:
    """Full-neighborhood features: one row per bin in the tracked window.

    The neighborhood is recomputed from the same most-common-bin vote that
    seeded the tracker; ``sel`` must stay inside it, which guards against
    mixing selections produced under different parameters.
    """
    sel.validate_for(cir)
    rate = cir.config.processing_rate
    center = most_common_bin(magnitude(cir))
    first, last = neighborhood(center, params.w_b, cir.num_samples)
    if np.any(sel.bins < first) or np.any(sel.bins > last):
        raise InvalidInputError(
            "selection leaves the tracked neighborhood; w_b mismatch?")
    rows = [_raw_channels(unwrap_phase(np.angle(cir.data[b])),
                          np.abs(cir.data[b]).astype(np.float64), rate)
            for b in range(first, last + 1)]
    return FeatureBlock(channels=_zscore_per_channel(np.stack(rows)),
                        bin_offsets=np.arange(last - first + 1), rate=rate)


def _stitched_phase(series: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """Unwrap phase segment-wise and join segments continuously.

    Different range bins carry unrelated static phase offsets, so the jump
    at a tracking hop is meaningless; stitching replaces it with a zero
    step instead of letting a multi-radian edge ring through the bandpass.
    """
    raw = np.angle(series)
    boundaries = np.nonzero(np.diff(bins))[0] + 1
    out = np.empty_like(raw, dtype=np.float64)
    start = 0
    last = None
    for stop in list(boundaries) + [raw.size]:
        seg = np.unwrap(raw[start:stop])
        if last is not None:
            seg = seg - seg[0] + last
        out[start:stop] = seg
        last = seg[-1]
        start = stop
    return out


def build_tracked_features(cir: CirMatrix, sel: BinSelection) -> FeatureBlock:
    """Single-bin features following the per-chirp selected bin.

    With a constant selection this is the classic one-stable-bin pipeline;
    with a tracker selection the series hops bins as the tracker does, and
    the phase is stitched across hops.
    """
    sel.validate_for(cir)
    series = cir.data[sel.bins, np.arange(cir.num_chirps)]
    channels = _raw_channels(_stitched_phase(series, sel.bins),
                             np.abs(series).astype(np.float64),
                             cir.config.processing_rate)
    return FeatureBlock(channels=_zscore_per_channel(channels[None, :, :]),
                        bin_offsets=np.zeros(1, dtype=np.int64),
                        rate=cir.config.processing_rate)
