"""Domain types and phase/displacement math shared by the whole pipeline.

The radar front end is modeled by a channel-impulse-response (CIR) matrix:
rows are range bins (fast time), columns are chirps (slow time). Chest
displacement maps to the phase of the complex reflection sample in the bin
occupied by the chest wall.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .synth import SubjectProfile

SPEED_OF_LIGHT = 299792458.0  # m/s


class CardioDxError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(CardioDxError, ValueError):
    """An argument violated a documented precondition."""


class FormatError(CardioDxError, ValueError):
    """A serialized artifact is malformed. Carries the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InsufficientDataError(CardioDxError, ValueError):
    """Too few samples/peaks/intervals to compute the requested quantity."""


class NumericError(CardioDxError, RuntimeError):
    """A numeric computation produced non-finite values."""


def derive_seed(master: int, *tags: object) -> int:
    """Derive a stable per-stage seed from a master seed and a tag path.

    Hash-based so that partial reruns of any stage see the same stream as a
    full run, independent of evaluation order.
    """
    text = ":".join([str(int(master))] + [str(t) for t in tags])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class RadarConfig:
    """FMCW radar timing and rates.

    The slow-time (chirp) rate is fixed by chirp_period + idle_time; the
    pipeline operates at processing_rate after complex mean-pool decimation,
    so processing_rate must divide the slow-time rate.
    """

    carrier_freq: float = 79e9  # Hz, band center of 77-81 GHz
    chirp_period: float = 50e-6  # s
    idle_time: float = 150e-6  # s
    samples_per_chirp: int = 256
    adc_rate: float = 6e6  # samples/s
    processing_rate: float = 200.0  # Hz, after decimation

    def __post_init__(self):
        for name in ("carrier_freq", "chirp_period", "idle_time", "adc_rate",
                     "processing_rate"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.samples_per_chirp < 1:
            raise InvalidInputError("samples_per_chirp must be >= 1")
        ratio = self.slow_time_rate / self.processing_rate
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise InvalidInputError(
                "processing_rate must divide the slow-time rate "
                f"({self.slow_time_rate:.6g} Hz)")

    @property
    def slow_time_rate(self) -> float:
        return 1.0 / (self.chirp_period + self.idle_time)

    @property
    def decimation(self) -> int:
        return int(round(self.slow_time_rate / self.processing_rate))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq


@dataclass
class CirMatrix:
    """Complex reflection samples, shape (num_samples, num_chirps).

    Row index is the range bin, column index the chirp. On disk the payload
    is stored as float32 pairs, so complex64 is the canonical dtype.
    """

    data: np.ndarray
    config: RadarConfig = field(default_factory=RadarConfig)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise InvalidInputError("CIR data must be 2-D (bins x chirps)")
        if not np.iscomplexobj(self.data):
            raise InvalidInputError("CIR data must be complex")
        if self.data.shape[0] != self.config.samples_per_chirp:
            raise InvalidInputError(
                f"CIR has {self.data.shape[0]} bins but config expects "
                f"{self.config.samples_per_chirp}")
        if self.data.shape[1] < 1:
            raise InvalidInputError("CIR must contain at least one chirp")
        if not np.all(np.isfinite(self.data.view(np.float32 if
                      self.data.dtype == np.complex64 else np.float64))):
            raise InvalidInputError("CIR entries must be finite")

    @property
    def num_samples(self) -> int:
        return self.data.shape[0]

    @property
    def num_chirps(self) -> int:
        return self.data.shape[1]


@dataclass
class BinSelection:
    """Range-bin index selected for each chirp (0-based)."""

    bins: np.ndarray

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.int64)
        if self.bins.ndim != 1 or self.bins.size < 1:
            raise InvalidInputError("bins must be a non-empty 1-D sequence")
        if np.any(self.bins < 0):
            raise InvalidInputError("bin indices must be non-negative")

    def validate_for(self, cir: CirMatrix) -> None:
        if self.bins.size != cir.num_chirps:
            raise InvalidInputError(
                f"selection has {self.bins.size} entries for "
                f"{cir.num_chirps} chirps")
        if np.any(self.bins >= cir.num_samples):
            raise InvalidInputError("selection contains out-of-range bins")


@dataclass
class Hpw:
    """Heart pulse waveform: amplitude in [0, 1] at a fixed sample rate."""

    samples: np.ndarray
    rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidInputError("HPW must be 1-D")
        if self.rate <= 0:
            raise InvalidInputError("HPW rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.rate


@dataclass
class RecordingBundle:
    """One synthetic trial: CIR plus ground-truth beat train and label."""

    cir: CirMatrix
    r_peaks: np.ndarray  # seconds, strictly increasing
    label: str  # "healthy" | "arrhythmia"
    subject_profile: "SubjectProfile"
    duration: float = 60.0

    def __post_init__(self):
        self.r_peaks = np.asarray(self.r_peaks, dtype=np.float64)
        if self.label not in ("healthy", "arrhythmia"):
            raise InvalidInputError(f"unknown label {self.label!r}")
        if self.duration <= 0:
            raise InvalidInputError("duration must be positive")
        if self.r_peaks.size:
            if np.any(np.diff(self.r_peaks) <= 0):
                raise InvalidInputError("r_peaks must be strictly increasing")
            if self.r_peaks[0] < 0 or self.r_peaks[-1] > self.duration:
                raise InvalidInputError("r_peaks must lie within [0, duration]")


def displacement_from_phase(phase, config: RadarConfig):
    """Convert reflection phase (radians) to chest displacement (meters).

    d = (lambda / 4 pi) * phi. Accepts scalars or arrays.
    """
    phase = np.asarray(phase, dtype=np.float64)
    if not np.all(np.isfinite(phase)):
        raise InvalidInputError("phase must be finite")
    d = config.wavelength / (4.0 * np.pi) * phase
    return float(d) if d.ndim == 0 else d


def phase_from_displacement(displacement, config: RadarConfig):
    """Inverse of displacement_from_phase: phi = (4 pi / lambda) * d."""
    d = np.asarray(displacement, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise InvalidInputError("displacement must be finite")
    phi = 4.0 * np.pi / config.wavelength * d
    return float(phi) if phi.ndim == 0 else phi


def magnitude(cir: CirMatrix) -> np.ndarray:
    """Elementwise complex modulus of the CIR, same shape."""
    return np.abs(cir.data)


def unwrap_phase(wrapped) -> np.ndarray:
    """Classic phase unwrap: successive output differences lie in (-pi, pi].

    Preserves the first sample and congruence mod 2 pi.
    """
    wrapped = np.asarray(wrapped, dtype=np.float64)
    if wrapped.ndim != 1 or wrapped.size == 0:
        raise InvalidInputError("phase sequence must be 1-D and non-empty")
    if not np.all(np.isfinite(wrapped)):
        raise InvalidInputError("phase sequence must be finite")
    return np.unwrap(wrapped)


def phase_track(cir: CirMatrix, sel: BinSelection) -> np.ndarray:
    """Unwrapped per-chirp phase of the selected range bin."""
    sel.validate_for(cir)
    samples = cir.data[sel.bins, np.arange(cir.num_chirps)]
    return unwrap_phase(np.angle(samples))
