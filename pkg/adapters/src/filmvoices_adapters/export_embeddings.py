"""Export sliding-window speaker embeddings in the embedding-line contract.

Windows slide over detected (or supplied) speech regions; only full
windows are emitted, so a region of length L with window W and hop H
yields floor((L - W) / H) + 1 records (none if L < W).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audio import detect_speech_regions, parse_region_rttm, read_mono_wav
from .backends import ModelLoadError, embedding_backend
from .manifest import write_manifest


def window_starts(region_start: float, region_end: float, window_s: float, hop_s: float):
    starts = []
    start = region_start
    while start + window_s <= region_end + 1e-9:
        starts.append(start)
        start += hop_s
    return starts


def export_embeddings(
    audio_path,
    output_path,
    backend_name: str = "spectral",
    window_s: float = 1.0,
    hop_s: float = 0.5,
    regions: list[tuple[float, float]] | None = None,
    recording_id: str | None = None,
) -> int:
    """Returns the number of records written."""
    samples, rate = read_mono_wav(audio_path)
    backend = embedding_backend(backend_name)
    if regions is None:
        regions = detect_speech_regions(samples, rate)
    records = []
    for region_start, region_end in regions:
        for start in window_starts(region_start, region_end, window_s, hop_s):
            lo = int(round(start * rate))
            hi = int(round((start + window_s) * rate))
            vector = backend.embed(samples[lo:hi], rate)
            records.append(
                json.dumps(
                    {
                        "start": round(start, 3),
                        "end": round(start + window_s, 3),
                        "vector": [float(v) for v in vector],
                    }
                )
            )
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text("".join(line + "\n" for line in records), encoding="utf-8")
    write_manifest(
        output_path,
        backend.name,
        backend.version,
        recording_id or Path(audio_path).stem,
        {
            "window_s": window_s,
            "hop_s": hop_s,
            "n_regions": len(regions),
            "n_records": len(records),
        },
    )
    if not records:
        print("warning: no speech regions long enough for a window", file=sys.stderr)
    return len(records)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Sliding-window speaker embeddings over detected speech."
    )
    parser.add_argument("audio", help="mono WAV input")
    parser.add_argument("--out", required=True, help="embedding-lines output path")
    parser.add_argument(
        "--backend", default="spectral", choices=["spectral", "pyannote"]
    )
    parser.add_argument("--window", type=float, default=1.0, help="window seconds")
    parser.add_argument("--hop", type=float, default=0.5, help="hop seconds")
    parser.add_argument(
        "--speech-rttm", default=None, help="use these regions instead of the energy gate"
    )
    parser.add_argument(
        "--region",
        action="append",
        default=None,
        metavar="START:END",
        help="explicit speech region, repeatable",
    )
    parser.add_argument("--recording", default=None)
    args = parser.parse_args(argv)

    regions = None
    if args.speech_rttm:
        regions = parse_region_rttm(args.speech_rttm)
    if args.region:
        regions = (regions or []) + [
            (float(spec.split(":")[0]), float(spec.split(":")[1]))
            for spec in args.region
        ]
    try:
        count = export_embeddings(
            args.audio,
            args.out,
            backend_name=args.backend,
            window_s=args.window,
            hop_s=args.hop,
            regions=regions,
            recording_id=args.recording,
        )
    except (ModelLoadError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} records to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
