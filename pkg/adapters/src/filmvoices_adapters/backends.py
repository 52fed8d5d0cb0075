"""Pluggable model backends.

The neural backends import their frameworks lazily and fail with a clear
message when the model stack is not installed; the DSP backends are
dependency-free, deterministic stand-ins that keep the file contracts
exercisable on any machine (CI, desk-scale runs).
"""

from __future__ import annotations

import numpy as np


class ModelLoadError(RuntimeError):
    """The requested model stack is unavailable or failed to load."""


class SpectralEmbedder:
    """Deterministic log-mel-band embedding, numpy only."""

    name = "spectral-bands"
    version = "1"

    def __init__(self, dimension: int = 16):
        self.dimension = dimension

    def embed(self, samples: np.ndarray, rate: int) -> np.ndarray:
        spectrum = np.abs(np.fft.rfft(samples * np.hanning(samples.size))) ** 2
        freqs = np.fft.rfftfreq(samples.size, 1.0 / rate)
        edges = 700.0 * (
            np.expm1(np.linspace(0.0, np.log1p(min(rate / 2, 8000.0) / 700.0), self.dimension + 1))
        )
        bands = np.empty(self.dimension)
        for i in range(self.dimension):
            mask = (freqs >= edges[i]) & (freqs < edges[i + 1])
            bands[i] = spectrum[mask].sum() if mask.any() else 0.0
        bands = np.log10(bands + 1e-10)
        norm = np.linalg.norm(bands)
        return bands / norm if norm > 0 else bands


class PyannoteEmbedder:
    """Speaker embeddings from pyannote.audio (requires the model stack)."""

    name = "pyannote/embedding"

    def __init__(self, model_name: str = "pyannote/embedding"):
        try:
            import torch  # noqa: F401
            from pyannote.audio import Inference, Model
        except ImportError as exc:
            raise ModelLoadError(
                f"pyannote.audio is not installed ({exc}); install it or use "
                "--backend spectral"
            ) from exc
        try:
            self._inference = Inference(Model.from_pretrained(model_name), window="whole")
        except Exception as exc:
            raise ModelLoadError(f"failed to load {model_name}: {exc}") from exc
        self.version = model_name

    def embed(self, samples: np.ndarray, rate: int) -> np.ndarray:
        import torch

        waveform = torch.from_numpy(samples[np.newaxis, :].astype("float32"))
        return np.asarray(self._inference({"waveform": waveform, "sample_rate": rate}))


class EnergySegmenter:
    """Placeholder 'ASR': emits one segment per detected speech region.

    Text is a fixed marker - this backend exists to exercise the transcript
    contract offline, not to recognize words.
    """

    name = "energy-segmenter"
    version = "1"
    placeholder = "(unverstandene Rede)"

    def transcribe(self, samples, rate, regions, language):
        return [
            {"start": start, "end": end, "text": self.placeholder}
            for start, end in regions
        ]


class WhisperTranscriber:
    """OpenAI Whisper transcription (requires the model stack)."""

    def __init__(self, model_size: str = "medium"):
        try:
            import whisper
        except ImportError as exc:
            raise ModelLoadError(
                f"whisper is not installed ({exc}); install openai-whisper or "
                "use --backend energy"
            ) from exc
        try:
            self._model = whisper.load_model(model_size)
        except Exception as exc:
            raise ModelLoadError(f"failed to load whisper-{model_size}: {exc}") from exc
        self.name = "openai-whisper"
        self.version = model_size

    def transcribe(self, samples, rate, regions, language):
        result = self._model.transcribe(
            samples.astype("float32"), language=language, fp16=False
        )
        return [
            {
                "start": float(seg["start"]),
                "end": float(seg["end"]),
                "text": seg["text"].strip(),
            }
            for seg in result["segments"]
            if seg["text"].strip()
        ]


def embedding_backend(name: str):
    if name == "spectral":
        return SpectralEmbedder()
    if name == "pyannote":
        return PyannoteEmbedder()
    raise ModelLoadError(f"unknown embedding backend {name!r}")


def transcript_backend(name: str, model_size: str):
    if name == "energy":
        return EnergySegmenter()
    if name == "whisper":
        return WhisperTranscriber(model_size)
    raise ModelLoadError(f"unknown transcript backend {name!r}")
