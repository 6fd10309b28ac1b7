"""File formats: CIR recordings, feature blocks, and recording bundles.

``cir.bin`` layout: one UTF-8 JSON header line (terminated by ``\\n``)
followed by little-endian float32 (re, im) pairs, row-major bin by bin.
Feature blocks use the same scheme with a ``FTR1`` magic and a real-valued
payload. A RecordingBundle is a directory with ``cir.bin``, ``rpeaks.csv``
(one float second per line) and ``meta.json``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from .core import CirMatrix, FormatError, RadarConfig, RecordingBundle

CIR_MAGIC = "CIR1"
FTR_MAGIC = "FTR1"

# Refuse payloads above 1 GiB so corrupt headers cannot trigger huge allocations.
_MAX_PAYLOAD_BYTES = 1 << 30


def _read_header(raw: bytes, path) -> tuple[dict, int]:
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header newline", offset=len(raw))
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad JSON header: {exc}", offset=0) from exc
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header is not a JSON object", offset=0)
    return header, nl + 1


def _check_dims(header: dict, path, keys: tuple[str, ...], itemsize: int) -> int:
    count = 1
    for key in keys:
        value = header.get(key)
        if not isinstance(value, int) or value < 1:
            raise FormatError(f"{path}: invalid {key}={value!r}", offset=0)
        count *= value
    if count * itemsize > _MAX_PAYLOAD_BYTES:
        raise FormatError(f"{path}: declared payload too large", offset=0)
    return count


def save_cir(cir: CirMatrix, path) -> None:
    header = {
        "magic": CIR_MAGIC,
        "num_samples": cir.num_samples,
        "num_chirps": cir.num_chirps,
        "carrier_freq": cir.config.carrier_freq,
        "chirp_period": cir.config.chirp_period,
        "idle_time": cir.config.idle_time,
        "processing_rate": cir.config.processing_rate,
    }
    payload = np.empty((cir.num_samples, cir.num_chirps, 2), dtype="<f4")
    payload[:, :, 0] = cir.data.real
    payload[:, :, 1] = cir.data.imag
    _atomic_write(path, json.dumps(header).encode() + b"\n" + payload.tobytes())


def load_cir(path) -> CirMatrix:
    raw = Path(path).read_bytes()
    header, start = _read_header(raw, path)
    if header.get("magic") != CIR_MAGIC:
        raise FormatError(f"{path}: bad magic {header.get('magic')!r}", offset=0)
    count = _check_dims(header, path, ("num_samples", "num_chirps"), 8)
    expected = count * 8
    if len(raw) - start < expected:
        raise FormatError(
            f"{path}: payload truncated, expected {expected} bytes",
            offset=len(raw))
    if len(raw) - start > expected:
        raise FormatError(
            f"{path}: trailing bytes after payload", offset=start + expected)
    flat = np.frombuffer(raw, dtype="<f4", count=count * 2, offset=start)
    data = flat.reshape(header["num_samples"], header["num_chirps"], 2)
    config = RadarConfig(
        carrier_freq=header["carrier_freq"],
        chirp_period=header["chirp_period"],
        idle_time=header["idle_time"],
        samples_per_chirp=header["num_samples"],
        processing_rate=header["processing_rate"],
    )
    return CirMatrix(data=(data[:, :, 0] + 1j * data[:, :, 1]).astype(np.complex64),
                     config=config)


def save_features(block, path) -> None:
    """Serialize a sigproc.FeatureBlock (real-valued sibling of CIR1)."""
    channels = np.ascontiguousarray(block.channels, dtype="<f4")
    header = {
        "magic": FTR_MAGIC,
        "num_bins": int(channels.shape[0]),
        "num_steps": int(channels.shape[1]),
        "num_channels": int(channels.shape[2]),
        "rate": block.rate,
        "bin_offsets": [int(b) for b in block.bin_offsets],
    }
    _atomic_write(path, json.dumps(header).encode() + b"\n" + channels.tobytes())


def load_features(path):
    from .sigproc import FeatureBlock

    raw = Path(path).read_bytes()
    header, start = _read_header(raw, path)
    if header.get("magic") != FTR_MAGIC:
        raise FormatError(f"{path}: bad magic {header.get('magic')!r}", offset=0)
    count = _check_dims(header, path, ("num_bins", "num_steps", "num_channels"), 4)
    if len(raw) - start < count * 4:
        raise FormatError(f"{path}: payload truncated", offset=len(raw))
    flat = np.frombuffer(raw, dtype="<f4", count=count, offset=start)
    channels = flat.reshape(header["num_bins"], header["num_steps"],
                            header["num_channels"]).astype(np.float64)
    return FeatureBlock(channels=channels,
                        bin_offsets=np.asarray(header["bin_offsets"], dtype=np.int64),
                        rate=header["rate"])


def save_bundle(bundle: RecordingBundle, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_cir(bundle.cir, out_dir / "cir.bin")
    _atomic_write(out_dir / "rpeaks.csv",
                  "".join(f"{t:.10g}\n" for t in bundle.r_peaks).encode())
    meta = {
        "label": bundle.label,
        "seed": bundle.subject_profile.seed,
        "duration": bundle.duration,
        "profile": dataclasses.asdict(bundle.subject_profile),
    }
    _atomic_write(out_dir / "meta.json", json.dumps(meta, indent=1).encode())


def load_bundle(bundle_dir) -> RecordingBundle:

    bundle_dir = Path(bundle_dir)
    cir = load_cir(bundle_dir / "cir.bin")
    text = (bundle_dir / "rpeaks.csv").read_text()
    try:
        r_peaks = np.asarray([float(line) for line in text.split()], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{bundle_dir}/rpeaks.csv: {exc}") from exc
    from .synth import profile_from_dict

    try:
        meta = json.loads((bundle_dir / "meta.json").read_text())
        profile = profile_from_dict(meta["profile"])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{bundle_dir}/meta.json: {exc}") from exc
    return RecordingBundle(cir=cir, r_peaks=r_peaks, label=meta["label"],
                           subject_profile=profile, duration=meta["duration"])


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def validate_bundle_dir(path) -> bool:
    path = Path(path)
    return all((path / name).is_file()
               for name in ("cir.bin", "rpeaks.csv", "meta.json"))
