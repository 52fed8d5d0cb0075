"""Energy-based voice activity detection fallback.

Produces a speech Timeline from raw mono samples for runs without an
external neural VAD.  The decision rule is a per-frame log-energy gate
against an adaptive noise floor: historical film audio varies too much in
level for an absolute threshold, so the floor is the 20th percentile of
all frame energies (assuming at least 20% of a feature film is
non-speech).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TimeInterval, Timeline

ENERGY_EPS = 1e-10
NOISE_FLOOR_PERCENTILE = 20.0
MIN_SAMPLE_RATE = 8000


@dataclass
class AudioBuffer:
    """Decoded mono samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"expected mono samples, got shape {self.samples.shape}")
        if self.sample_rate < MIN_SAMPLE_RATE:
            raise ValueError(
                f"sample rate must be >= {MIN_SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        if self.samples.size and np.max(np.abs(self.samples)) > 1.0 + 1e-6:
            raise ValueError("samples out of [-1, 1] range")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class VadConfig:
    frame_ms: float = 30.0
    hop_ms: float = 10.0
    threshold_db: float = 12.0
    min_speech_s: float = 0.3
    min_gap_s: float = 0.2

    def __post_init__(self) -> None:
        if not self.frame_ms >= self.hop_ms > 0:
            raise ValueError(
                f"need frame_ms >= hop_ms > 0, got {self.frame_ms}/{self.hop_ms}"
            )
        if self.min_speech_s < 0 or self.min_gap_s < 0:
            raise ValueError("min_speech_s and min_gap_s must be >= 0")


def frame_energies_db(audio: AudioBuffer, cfg: VadConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame start times and log energies, 10*log10(mean(x^2) + eps).

    Frames start every hop_ms and nominally span frame_ms; the tail frames
    are shortened to the available samples.
    """
    n = audio.samples.size
    frame_len = max(1, int(round(audio.sample_rate * cfg.frame_ms / 1000.0)))
    hop_len = max(1, int(round(audio.sample_rate * cfg.hop_ms / 1000.0)))
    starts = np.arange(0, n, hop_len)
    ends = np.minimum(starts + frame_len, n)
    cumulative = np.concatenate(([0.0], np.cumsum(audio.samples**2)))
    means = (cumulative[ends] - cumulative[starts]) / (ends - starts)
    return starts / audio.sample_rate, 10.0 * np.log10(means + ENERGY_EPS)


def detect_speech(
    audio: AudioBuffer, cfg: VadConfig = VadConfig(), recording_id: str = ""
) -> Timeline:
    """Detect speech regions by thresholding frame energy above the noise floor.

    Consecutive speech frames merge into intervals (each frame contributes
    [start, start + frame_ms]); gaps shorter than min_gap_s are bridged and
    intervals shorter than min_speech_s are dropped.
    """
    if audio.samples.size == 0:
        raise ValueError("cannot run VAD on empty audio")
    starts_s, energies = frame_energies_db(audio, cfg)
    floor = float(np.percentile(energies, NOISE_FLOOR_PERCENTILE))
    is_speech = energies > floor + cfg.threshold_db

    frame_s = cfg.frame_ms / 1000.0
    duration = audio.duration_s
    raw: list[tuple[float, float]] = []
    for start, speech in zip(starts_s, is_speech):
        if not speech:
            continue
        end = min(start + frame_s, duration)
        if raw and start <= raw[-1][1]:
            raw[-1] = (raw[-1][0], max(raw[-1][1], end))
        else:
            raw.append((start, end))

    bridged: list[tuple[float, float]] = []
    for start, end in raw:
        if bridged and start - bridged[-1][1] < cfg.min_gap_s:
            bridged[-1] = (bridged[-1][0], end)
        else:
            bridged.append((start, end))

    kept = [
        TimeInterval(start, end)
        for start, end in bridged
        if end - start >= cfg.min_speech_s and end > start
    ]
    return Timeline(recording_id, tuple(kept))


def load_wav(path) -> AudioBuffer:
    """Read a mono PCM (16-bit) or IEEE float (32-bit) WAV file.

    Container demuxing is out of scope: film audio is expected to arrive
    through the configured extraction command as a plain mono WAV.
    """
    from scipy.io import wavfile

    sample_rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(
            f"{path}: expected mono audio, got {data.ndim} channels; "
            "configure the extraction command to downmix"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = np.clip(data.astype(np.float64), -1.0, 1.0)
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return AudioBuffer(samples=samples, sample_rate=int(sample_rate))
