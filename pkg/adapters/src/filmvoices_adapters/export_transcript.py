"""Export a transcript document in the pipeline's transcript contract."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audio import detect_speech_regions, read_mono_wav
from .backends import ModelLoadError, transcript_backend
from .manifest import write_manifest


def export_transcript(
    audio_path,
    output_path,
    backend_name: str = "energy",
    model_size: str = "medium",
    language: str = "de",
    recording_id: str | None = None,
) -> int:
    """Returns the number of segments written."""
    samples, rate = read_mono_wav(audio_path)
    backend = transcript_backend(backend_name, model_size)
    regions = detect_speech_regions(samples, rate)
    segments = backend.transcribe(samples, rate, regions, language)
    segments = [
        {
            "start": round(float(seg["start"]), 3),
            "end": round(float(seg["end"]), 3),
            "text": seg["text"],
        }
        for seg in segments
        if float(seg["end"]) > float(seg["start"]) and seg["text"]
    ]
    recording = recording_id or Path(audio_path).stem
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(
        json.dumps(
            {"recording": recording, "segments": segments},
            ensure_ascii=False,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    write_manifest(
        output_path,
        backend.name,
        backend.version,
        recording,
        {"language": language, "n_segments": len(segments)},
    )
    if not segments:
        print("warning: no speech found, empty transcript", file=sys.stderr)
    return len(segments)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Transcribe a mono WAV into the transcript document format."
    )
    parser.add_argument("audio", help="mono WAV input")
    parser.add_argument("--out", required=True, help="transcript JSON output path")
    parser.add_argument("--backend", default="energy", choices=["energy", "whisper"])
    parser.add_argument("--model-size", default="medium")
    parser.add_argument("--language", default="de")
    parser.add_argument("--recording", default=None)
    args = parser.parse_args(argv)
    try:
        count = export_transcript(
            args.audio,
            args.out,
            backend_name=args.backend,
            model_size=args.model_size,
            language=args.language,
            recording_id=args.recording,
        )
    except (ModelLoadError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} segments to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
