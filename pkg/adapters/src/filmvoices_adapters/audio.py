"""Minimal standalone audio input: mono WAV reading and speech gating."""

from __future__ import annotations

import struct
import wave

import numpy as np


def read_mono_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono 16-bit PCM or 32-bit float WAV into [-1, 1] samples."""
    try:
        with wave.open(str(path), "rb") as handle:
            channels = handle.getnchannels()
            width = handle.getsampwidth()
            rate = handle.getframerate()
            frames = handle.readframes(handle.getnframes())
    except (wave.Error, EOFError, struct.error) as exc:
        raise ValueError(f"{path}: not a readable WAV file: {exc}") from exc
    if channels != 1:
        raise ValueError(f"{path}: expected mono audio, got {channels} channels")
    if width == 2:
        samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 4:
        # wave reports 4-byte widths for both int32 PCM and IEEE float;
        # sniff by magnitude after trying float32 first.
        as_float = np.frombuffer(frames, dtype="<f4").astype(np.float64)
        if as_float.size and np.isfinite(as_float).all() and np.abs(as_float).max() <= 32.0:
            samples = np.clip(as_float, -1.0, 1.0)
        else:
            samples = (
                np.frombuffer(frames, dtype="<i4").astype(np.float64) / 2147483648.0
            )
    else:
        raise ValueError(f"{path}: unsupported sample width {width} bytes")
    return samples, rate


def detect_speech_regions(
    samples: np.ndarray,
    rate: int,
    frame_s: float = 0.03,
    hop_s: float = 0.01,
    threshold_db: float = 12.0,
    min_speech_s: float = 0.3,
    min_gap_s: float = 0.2,
) -> list[tuple[float, float]]:
    """Energy-gated speech regions, (start, end) pairs in seconds.

    Same recipe as the main pipeline's fallback VAD (log energy against a
    20th-percentile noise floor), reimplemented here so the adapters stay
    importable on their own.
    """
    if samples.size == 0:
        return []
    frame = max(1, int(round(frame_s * rate)))
    hop = max(1, int(round(hop_s * rate)))
    starts = np.arange(0, samples.size, hop)
    ends = np.minimum(starts + frame, samples.size)
    cumulative = np.concatenate(([0.0], np.cumsum(samples**2)))
    energies = 10.0 * np.log10(
        (cumulative[ends] - cumulative[starts]) / (ends - starts) + 1e-10
    )
    floor = np.percentile(energies, 20.0)
    speech = energies > floor + threshold_db

    duration = samples.size / rate
    regions: list[list[float]] = []
    for start, hit in zip(starts / rate, speech):
        if not hit:
            continue
        end = min(start + frame_s, duration)
        if regions and start - regions[-1][1] < min_gap_s:
            regions[-1][1] = max(regions[-1][1], end)
        else:
            regions.append([start, end])
    return [(s, e) for s, e in regions if e - s >= min_speech_s]


def parse_region_rttm(path) -> list[tuple[float, float]]:
    """Read speech regions from SPEAKER lines of an RTTM file."""
    regions = []
    for line in open(path, encoding="utf-8"):
        fields = line.split()
        if not fields or fields[0] != "SPEAKER":
            continue
        onset, duration = float(fields[3]), float(fields[4])
        regions.append((onset, onset + duration))
    return sorted(regions)
