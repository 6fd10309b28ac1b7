"""Contactless arrhythmia monitoring and diagnosis on synthetic radar data."""

from .core import (BinSelection, CardioDxError, CirMatrix, FormatError, Hpw,
                   InsufficientDataError, InvalidInputError, NumericError,
                   RadarConfig, RecordingBundle, derive_seed,
                   displacement_from_phase, magnitude, phase_track,
                   unwrap_phase)
# The ptl *function* is not re-exported here: it would shadow the
# cardiodx.ptl submodule. Import it as ``from cardiodx.ptl import ptl``.
from .ptl import PtlParams, most_common_bin
from .synth import (RPeakTrain, SubjectProfile, arrhythmia_profile, gen_cir,
                    gen_chest_motion, gen_hpw_target, gen_rr_sequence,
                    healthy_profile)

__version__ = "0.1.0"

__all__ = [
    "BinSelection", "CardioDxError", "CirMatrix", "FormatError", "Hpw",
    "InsufficientDataError", "InvalidInputError", "NumericError",
    "RadarConfig", "RecordingBundle", "RPeakTrain", "SubjectProfile",
    "PtlParams", "arrhythmia_profile", "derive_seed",
    "displacement_from_phase", "gen_cir", "gen_chest_motion",
    "gen_hpw_target", "gen_rr_sequence", "healthy_profile", "magnitude",
    "most_common_bin", "phase_track", "unwrap_phase",
]
