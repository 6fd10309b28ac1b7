"""Precise target localization: most-common-bin plus windowed tracking.

Step 1 finds the globally dominant range bin; step 2 restricts the matrix to
a w_b-bin neighborhood around it and re-runs the most-common-bin vote inside
every w_t-chirp window, so the selection can follow reflections that wander
between neighboring bins over time. All indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinSelection, CirMatrix, InvalidInputError, magnitude


@dataclass(frozen=True)
class PtlParams:
    """w_t: chirps per tracking window; w_b: neighborhood breadth in bins."""

    w_t: int = 200
    w_b: int = 9

    def __post_init__(self):
        if self.w_t < 1 or self.w_b < 1:
            raise InvalidInputError("w_t and w_b must be >= 1")


def default_params(processing_rate: float = 200.0,
                   window_seconds: float = 1.0, w_b: int = 9) -> PtlParams:
    return PtlParams(w_t=max(1, int(round(window_seconds * processing_rate))),
                     w_b=w_b)


def most_common_bin(m: np.ndarray) -> int:
    """Mode over chirps of the per-chirp argmax-magnitude bin.

    Ties in the argmax and in the mode both break toward the lower index.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInputError("matrix must be 2-D and non-empty")
    per_chirp = np.argmax(m, axis=0)  # argmax returns the first (lowest) max
    counts = np.bincount(per_chirp, minlength=m.shape[0])
    return int(np.argmax(counts))


def neighborhood(center: int, w_b: int, num_bins: int) -> tuple[int, int]:
    """Inclusive [first, last] bin window of breadth w_b, clamped to bounds."""
    first = max(0, center - w_b // 2)
    last = min(num_bins - 1, center + (w_b + 1) // 2 - 1)
    return first, last


def ptl(cir: CirMatrix, params: PtlParams) -> BinSelection:
    """Two-step bin tracker; output is piecewise constant over w_t windows."""
    if params.w_b > cir.num_samples:
        raise InvalidInputError(
            f"w_b={params.w_b} exceeds {cir.num_samples} range bins")
    m = magnitude(cir)
    center = most_common_bin(m)
    first, last = neighborhood(center, params.w_b, cir.num_samples)
    sub = m[first:last + 1]

    bins = np.empty(cir.num_chirps, dtype=np.int64)
    for i in range(0, cir.num_chirps, params.w_t):
        window = sub[:, i:i + params.w_t]
        bins[i:i + params.w_t] = first + most_common_bin(window)
    return BinSelection(bins=bins)
