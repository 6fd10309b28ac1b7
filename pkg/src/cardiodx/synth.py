"""Synthetic recording generator with ground truth.

Reproduces the two phenomena that break single-bin pipelines on arrhythmia
patients: spatial dispersion (several chest-wall regions reflecting from
different, unstable range bins) and temporal misalignment (per-beat
contraction onsets jittered against the R-peak train). Healthy subjects get
one stable region, zero onset jitter.

Everything is deterministic given (profile, config, duration): every random
stream is derived from profile.seed with a fixed tag path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (CirMatrix, Hpw, InvalidInputError, RadarConfig,
                   RecordingBundle, derive_seed, phase_from_displacement)

# Cardiac pulse: derivative-of-Gaussian transient, 60 ms nominal width
# (std = width / 4), giving the high-acceleration signature of a heartbeat.
CARDIAC_KERNEL_WIDTH = 0.060  # s
# Fixed contraction lag per chest region (region k fires k * LAG after the
# R peak); on top of this each beat gets Gaussian onset jitter.
REGION_CONTRACTION_LAG = 0.060  # s
# Reflectivity of non-dominant regions relative to the dominant one. At the
# default 25 dB noise_snr this leaves ~5 dB of phase SNR, so a weakened
# region's beats genuinely drown instead of merely dimming; a fixed
# single-bin pipeline then loses the beats whenever dominance moves away.
SUBDOMINANT_GAIN = 0.10
# Static reflection level in non-region bins. Kept above the noise floor:
# the torso reflects weakly from neighboring bins too, which keeps their
# phase stable instead of a pure-noise random walk.
CLUTTER_DB = -14.0
# Probability that a beat is premature (short RR + compensatory pause).
PVC_PROBABILITY = 0.15
# Default Gaussian pulse std for ground-truth heart pulse waveforms.
HPW_SIGMA = 0.040  # s
# Default range bin for the chest wall; physical range calibration is out
# of scope, regions live in a 9-bin neighborhood around this.
CHEST_BIN = 48

MIN_RR = 0.32  # s, floor keeping every gap above the 0.3 s invariant


@dataclass(frozen=True)
class SubjectProfile:
    """Generative parameters for one synthetic subject."""

    kind: str  # "healthy" | "arrhythmia"
    mean_hr: float  # bpm
    hrv_sd: float  # ms, RR jitter
    n_regions: int
    region_bins: tuple[int, ...]
    dominance_dwell: float  # s, mean dwell of the dominant region (arrhythmia)
    contraction_jitter_sd: float  # ms, per-beat onset offset vs R peak
    resp_rate: float  # Hz
    resp_amp: float  # m
    heart_amp: tuple[float, ...]  # m, motion amplitude per region
    noise_snr: float  # dB, reflector-to-noise at the processing rate
    seed: int

    def __post_init__(self):
        if self.kind not in ("healthy", "arrhythmia"):
            raise InvalidInputError(f"unknown profile kind {self.kind!r}")
        if not 55.0 <= self.mean_hr <= 115.0:
            raise InvalidInputError("mean_hr must lie in [55, 115] bpm")
        if self.n_regions < 1 or len(self.region_bins) != self.n_regions:
            raise InvalidInputError("region_bins must match n_regions")
        if len(set(self.region_bins)) != self.n_regions:
            raise InvalidInputError("region_bins must be distinct")
        if any(b < 0 for b in self.region_bins):
            raise InvalidInputError("region_bins must be non-negative")
        if len(self.heart_amp) != self.n_regions:
            raise InvalidInputError("heart_amp must match n_regions")
        if self.kind == "healthy":
            if self.n_regions != 1:
                raise InvalidInputError("healthy profiles have a single region")
            if self.contraction_jitter_sd != 0:
                raise InvalidInputError("healthy profiles have zero onset jitter")
        if self.hrv_sd < 0 or self.contraction_jitter_sd < 0:
            raise InvalidInputError("jitter SDs must be non-negative")
        if self.resp_rate <= 0 or self.resp_amp < 0 or self.dominance_dwell <= 0:
            raise InvalidInputError("respiration/dwell parameters out of range")
        if any(a <= 0 for a in self.heart_amp):
            raise InvalidInputError("heart_amp entries must be positive")


@dataclass(frozen=True)
class RPeakTrain:
    """Ground-truth heartbeat times, strictly increasing, gaps > 0.3 s."""

    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times",
                           np.asarray(self.times, dtype=np.float64))
        if self.times.ndim != 1:
            raise InvalidInputError("times must be 1-D")
        if self.times.size >= 2 and np.any(np.diff(self.times) <= 0.3):
            raise InvalidInputError("RR intervals must exceed 0.3 s")

    @property
    def rr_intervals(self) -> np.ndarray:
        return np.diff(self.times)


def profile_from_dict(fields: dict) -> SubjectProfile:
    """Build a profile from its JSON dict form (tuples arrive as lists)."""
    fields = dict(fields)
    for key in ("region_bins", "heart_amp"):
        fields[key] = tuple(fields[key])
    return SubjectProfile(**fields)


def healthy_profile(seed: int = 0, **overrides) -> SubjectProfile:
    """Seeded healthy subject: one stable region, small RR jitter."""
    rng = np.random.default_rng(derive_seed(seed, "profile", "healthy"))
    fields = dict(
        kind="healthy",
        mean_hr=float(rng.uniform(67.0, 97.0)),
        hrv_sd=float(rng.uniform(20.0, 45.0)),
        n_regions=1,
        region_bins=(CHEST_BIN,),
        dominance_dwell=2.0,
        contraction_jitter_sd=0.0,
        resp_rate=float(rng.uniform(0.2, 0.35)),
        resp_amp=1.5e-3,
        heart_amp=(4e-4,),
        noise_snr=25.0,
        seed=seed,
    )
    fields.update(overrides)
    return SubjectProfile(**fields)


def arrhythmia_profile(seed: int = 0, **overrides) -> SubjectProfile:
    """Seeded arrhythmia patient: 2-4 dispersed regions, onset jitter, PVCs.

    ``n_regions`` may be overridden alone; matching bins and amplitudes are
    drawn for it unless also given explicitly.
    """
    rng = np.random.default_rng(derive_seed(seed, "profile", "arrhythmia"))
    n_default = int(rng.integers(2, 5))
    n_regions = int(overrides.get("n_regions", n_default))
    # Regions stay within +/-2 bins of the chest so a default 9-bin window
    # centered on ANY member bin still covers every other member.
    bins = CHEST_BIN - 2 + rng.permutation(5)[:n_regions]
    amps = 4e-4 * rng.uniform(0.8, 1.2, size=n_regions)
    fields = dict(
        kind="arrhythmia",
        mean_hr=float(rng.uniform(55.0, 115.0)),
        hrv_sd=float(rng.uniform(60.0, 110.0)),
        n_regions=n_regions,
        region_bins=tuple(int(b) for b in np.sort(bins)),
        dominance_dwell=2.0,
        contraction_jitter_sd=35.0,
        resp_rate=float(rng.uniform(0.2, 0.35)),
        resp_amp=1.5e-3,
        heart_amp=tuple(float(a) for a in amps),
        noise_snr=25.0,
        seed=seed,
    )
    fields.update(overrides)
    return SubjectProfile(**fields)


def gen_rr_sequence(profile: SubjectProfile, duration: float,
                    p_pvc: float = PVC_PROBABILITY,
                    grid_rate: float | None = 200.0) -> RPeakTrain:
    """Generate the ground-truth beat train for one recording.

    Healthy: RR = 60/mean_hr + Gaussian(0, hrv_sd), floored at 0.32 s.
    Arrhythmia: the same base process with heavier jitter plus premature
    beats (probability ``p_pvc``) that shorten one interval and stretch the
    next (compensatory pause).

    Beat times are snapped to the ``grid_rate`` sample grid (pass None to
    disable) so the waveform targets can represent them exactly; the 5 ms
    grid is two orders of magnitude below any HRV scale of interest.
    """
    if duration <= 0:
        raise InvalidInputError("duration must be positive")
    rng = np.random.default_rng(derive_seed(profile.seed, "rr"))
    base = 60.0 / profile.mean_hr
    sd = profile.hrv_sd / 1000.0

    times = []
    t = 0.4 + rng.uniform(0.0, base / 2)
    compensatory = False
    while t <= duration - 0.4:
        times.append(t)
        rr = base + rng.normal(0.0, sd)
        if profile.kind == "arrhythmia":
            if compensatory:
                rr *= rng.uniform(1.35, 1.5)
                compensatory = False
            elif rng.uniform() < p_pvc:
                rr *= rng.uniform(0.5, 0.65)
                compensatory = True
        t += max(rr, MIN_RR)
    arr = np.asarray(times)
    if grid_rate is not None:
        arr = np.round(arr * grid_rate) / grid_rate
        # Snapping can only move a beat by half a sample; keep gaps legal.
        keep = np.concatenate([[True], np.diff(arr) > 0.3])
        arr = arr[keep]
    return RPeakTrain(times=arr)


def cardiac_event_times(rpeaks: RPeakTrain, profile: SubjectProfile,
                        region: int) -> np.ndarray:
    """Vibration onset per beat for one region: R peak + lag + onset jitter.

    Jitter streams are independent per region, so multi-bin observers can
    average them down while a single tracked bin cannot.
    """
    if not 0 <= region < profile.n_regions:
        raise InvalidInputError(f"region {region} out of range")
    rng = np.random.default_rng(derive_seed(profile.seed, "jitter", region))
    jitter = rng.normal(0.0, profile.contraction_jitter_sd / 1000.0,
                        size=rpeaks.times.size)
    return rpeaks.times + REGION_CONTRACTION_LAG * region + jitter


def _dog_kernel(t: np.ndarray, sigma: float) -> np.ndarray:
    # Derivative of a Gaussian, scaled to unit peak amplitude.
    return -(t / sigma) * np.exp(0.5 - t * t / (2.0 * sigma * sigma))


def gen_chest_motion(rpeaks: RPeakTrain, profile: SubjectProfile, region: int,
                     rate: float, duration: float) -> np.ndarray:
    """Chest-wall displacement (m) of one region: respiration + beat pulses."""
    if rate < 100.0:
        raise InvalidInputError("motion must be sampled at >= 100 Hz")
    if duration <= 0:
        raise InvalidInputError("duration must be positive")
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    rng = np.random.default_rng(derive_seed(profile.seed, "resp", region))
    motion = profile.resp_amp * np.sin(
        2.0 * np.pi * profile.resp_rate * t + rng.uniform(0.0, 2.0 * np.pi))

    sigma = CARDIAC_KERNEL_WIDTH / 4.0
    half = int(round(4.0 * sigma * rate))
    kernel_t = np.arange(-half, half + 1) / rate
    amp = profile.heart_amp[region]
    for center in cardiac_event_times(rpeaks, profile, region):
        i0 = int(round(center * rate))
        lo, hi = max(0, i0 - half), min(n, i0 + half + 1)
        if lo >= hi:
            continue
        shift = center - i0 / rate
        motion[lo:hi] += amp * _dog_kernel(
            kernel_t[lo - (i0 - half):hi - (i0 - half)] - shift, sigma)
    return motion


def dominance_weights(profile: SubjectProfile, rate: float,
                      duration: float) -> np.ndarray:
    """Per-region reflectivity over slow time, shape (n_regions, n_steps).

    Healthy subjects keep their single region at full strength. Arrhythmia
    switches the dominant region through a semi-Markov process with
    exponential dwell (mean ``dominance_dwell``); non-dominant regions drop
    to SUBDOMINANT_GAIN. A short boxcar smooth removes the step edges.
    """
    n = int(round(duration * rate))
    if profile.kind == "healthy" or profile.n_regions == 1:
        return np.ones((profile.n_regions, n))
    rng = np.random.default_rng(derive_seed(profile.seed, "dominance"))
    weights = np.full((profile.n_regions, n), SUBDOMINANT_GAIN)
    current = int(rng.integers(profile.n_regions))
    t = 0.0
    while t < duration:
        dwell = max(0.4, rng.exponential(profile.dominance_dwell))
        i0, i1 = int(round(t * rate)), min(n, int(round((t + dwell) * rate)))
        weights[current, i0:i1] = 1.0
        others = [r for r in range(profile.n_regions) if r != current]
        current = others[int(rng.integers(len(others)))]
        t += dwell
    width = max(1, int(round(0.15 * rate)))
    box = np.ones(width) / width
    smoothed = np.stack([np.convolve(w, box, mode="same") for w in weights])
    return smoothed


def dominant_region_track(profile: SubjectProfile, rate: float,
                          duration: float) -> np.ndarray:
    """Index of the strongest region per chirp (argmax of the dwell process)."""
    return np.argmax(dominance_weights(profile, rate, duration), axis=0)


def gen_cir(profile: SubjectProfile, config: RadarConfig,
            duration: float = 60.0) -> RecordingBundle:
    """Synthesize a full recording bundle with ground truth.

    Region motion is simulated at the native slow-time rate, turned into a
    unit-magnitude phasor via the radar phase relation, then mean-pool
    decimated to the processing rate, which is exactly what the front-end
    decimator does to real chirps. Reflectivity weighting, static clutter in
    the remaining bins and complex white noise are applied at the processing
    rate; noise_snr is defined against unit reflectivity after pooling.
    """
    if any(b >= config.samples_per_chirp for b in profile.region_bins):
        raise InvalidInputError("region bin outside the CIR")
    rate = config.processing_rate
    n_chirps = int(round(duration * rate))
    if n_chirps < 1:
        raise InvalidInputError("duration too short for one chirp")
    hi_rate = config.slow_time_rate
    factor = config.decimation
    rpeaks = gen_rr_sequence(profile, duration, grid_rate=rate)

    weights = dominance_weights(profile, rate, duration)
    data = np.zeros((config.samples_per_chirp, n_chirps), dtype=np.complex128)
    for region, bin_idx in enumerate(profile.region_bins):
        motion = gen_chest_motion(rpeaks, profile, region, hi_rate, duration)
        phasor = np.exp(1j * phase_from_displacement(motion, config))
        pooled = phasor[:n_chirps * factor].reshape(n_chirps, factor).mean(axis=1)
        data[bin_idx] += weights[region] * pooled

    rng = np.random.default_rng(derive_seed(profile.seed, "cir"))
    clutter_amp = 10.0 ** (CLUTTER_DB / 20.0)
    clutter_bins = [b for b in range(config.samples_per_chirp)
                    if b not in profile.region_bins]
    clutter = clutter_amp * (rng.standard_normal(len(clutter_bins))
                             + 1j * rng.standard_normal(len(clutter_bins))) / np.sqrt(2)
    data[clutter_bins] += clutter[:, None]

    sigma = 10.0 ** (-profile.noise_snr / 20.0)
    noise = (rng.standard_normal(data.shape)
             + 1j * rng.standard_normal(data.shape)) * (sigma / np.sqrt(2))
    cir = CirMatrix(data=(data + noise).astype(np.complex64), config=config)
    return RecordingBundle(cir=cir, r_peaks=rpeaks.times, label=profile.kind,
                           subject_profile=profile, duration=duration)


def gen_hpw_target(rpeaks: RPeakTrain, rate: float, sigma: float = HPW_SIGMA,
                   duration: float | None = None) -> Hpw:
    """Ground-truth heart pulse waveform: clipped Gaussian pulse train."""
    if sigma <= 0 or rate <= 0:
        raise InvalidInputError("sigma and rate must be positive")
    if duration is None:
        duration = float(rpeaks.times[-1]) + 4.0 * sigma if rpeaks.times.size else 0.0
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    h = np.zeros(n)
    half = int(round(5.0 * sigma * rate))
    for tk in rpeaks.times:
        i0 = int(round(tk * rate))
        lo, hi = max(0, i0 - half), min(n, i0 + half + 1)
        if lo >= hi:
            continue
        h[lo:hi] += np.exp(-((t[lo:hi] - tk) ** 2) / (2.0 * sigma * sigma))
    return Hpw(samples=np.minimum(h, 1.0), rate=rate)
