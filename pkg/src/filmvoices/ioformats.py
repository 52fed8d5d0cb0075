"""Readers and writers for every inter-stage file contract.

Three formats cross stage boundaries:

* RTTM — one ``SPEAKER`` line per turn, the diarization exchange format.
* Transcript document — one JSON object with ``recording`` and ``segments``.
* Embedding records — JSON lines, one ``{start, end, vector}`` object each.

Parsers reject exactly the documented malformed cases with a structured
:class:`ParseError` (never an uncontrolled crash) and writers are bit-exact:
``parse(write(x)) == x`` for times expressible in 3 decimals.
"""

from __future__ import annotations

import io
import json
import math
from collections.abc import Mapping
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .core import Annotation, SpeakerTurn, TimeInterval


class ParseError(ValueError):
    """Malformed input; message carries the line or segment position."""


@dataclass(frozen=True)
class TranscriptSegment:
    """Timed text, optionally attributed to a speaker."""

    interval: TimeInterval
    text: str
    speaker: str | None = None
    confidence: float | None = None
    non_speech: bool = False

    def __post_init__(self) -> None:
        if not self.text and not self.non_speech:
            raise ValueError(
                "segment text may be empty only when flagged non_speech"
            )
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def start(self) -> float:
        return self.interval.start

    @property
    def end(self) -> float:
        return self.interval.end


@dataclass(frozen=True)
class EmbeddingRecord:
    """A fixed-dimension vector attached to one speech segment."""

    interval: TimeInterval
    vector: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "vector", tuple(float(v) for v in self.vector))
        if len(self.vector) < 2:
            raise ValueError(f"embedding dimension must be >= 2, got {len(self.vector)}")
        if not all(math.isfinite(v) for v in self.vector):
            raise ValueError("embedding vector contains NaN or Inf")


def _as_text(source) -> str:
    """Accept str, bytes, or a readable file object."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        return source.decode("utf-8")
    return source


def _format_seconds(value: float) -> str:
    # Round-half-up on the decimal rendering, not the binary float, so
    # 1.23456 -> "1.235" and 0.0005 -> "0.001".
    return str(
        Decimal(repr(float(value))).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP)
    )


class RttmDocument(Mapping):
    """Parse result: a mapping recording_id -> Annotation, plus skip warnings."""

    def __init__(self, annotations: dict[str, Annotation], warnings: list[str]):
        self._annotations = annotations
        self.warnings = warnings

    def __getitem__(self, recording_id: str) -> Annotation:
        return self._annotations[recording_id]

    def __iter__(self):
        return iter(self._annotations)

    def __len__(self) -> int:
        return len(self._annotations)

    @property
    def skipped(self) -> int:
        return len(self.warnings)


def parse_rttm(source) -> RttmDocument:
    """Parse RTTM text into per-recording annotations.

    Each ``SPEAKER`` line is whitespace-split into exactly 10 fields
    (type, file-id, channel, onset, duration, <NA>, <NA>, speaker, <NA>,
    <NA>).  Lines of any other type are skipped and counted as warnings;
    blank lines are ignored.
    """
    turns: dict[str, list[SpeakerTurn]] = {}
    warnings: list[str] = []
    for lineno, line in enumerate(_as_text(source).splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            warnings.append(f"line {lineno}: skipped {fields[0]!r} line")
            continue
        if len(fields) != 10:
            raise ParseError(
                f"line {lineno}: expected 10 fields, got {len(fields)}"
            )
        recording_id = fields[1]
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise ParseError(
                f"line {lineno}: non-numeric onset/duration "
                f"{fields[3]!r}/{fields[4]!r}"
            ) from None
        if not (math.isfinite(onset) and math.isfinite(duration)):
            raise ParseError(f"line {lineno}: non-finite onset/duration")
        if duration <= 0:
            raise ParseError(f"line {lineno}: non-positive duration {duration}")
        try:
            turn = SpeakerTurn(TimeInterval(onset, onset + duration), fields[7])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        turns.setdefault(recording_id, []).append(turn)
    annotations = {
        rec: Annotation(rec, tuple(ts)) for rec, ts in sorted(turns.items())
    }
    return RttmDocument(annotations, warnings)


def write_rttm(annotations) -> str:
    """Serialize annotations as RTTM, one SPEAKER line per turn.

    Onset and duration carry exactly 3 decimal places; fields are
    single-space separated; turns appear in Annotation sort order.
    """
    if isinstance(annotations, Annotation):
        annotations = [annotations]
    elif isinstance(annotations, Mapping):
        annotations = [annotations[k] for k in annotations]
    lines = []
    for annotation in annotations:
        for turn in annotation.turns:
            lines.append(
                "SPEAKER {rec} 1 {onset} {dur} <NA> <NA> {spk} <NA> <NA>".format(
                    rec=annotation.recording_id,
                    onset=_format_seconds(turn.start),
                    dur=_format_seconds(turn.interval.duration),
                    spk=turn.speaker,
                )
            )
    return "".join(line + "\n" for line in lines)


def parse_transcript(source) -> tuple[str, list[TranscriptSegment]]:
    """Parse one transcript document: ``{"recording": ..., "segments": [...]}``.

    Segments are returned sorted by start time.
    """
    try:
        document = json.loads(_as_text(source))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid transcript JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ParseError("transcript document must be a JSON object")
    if "recording" not in document:
        raise ParseError("transcript document missing 'recording' field")
    if not isinstance(document.get("segments"), list):
        raise ParseError("transcript document missing 'segments' array")
    segments = []
    for index, raw in enumerate(document["segments"]):
        if not isinstance(raw, dict):
            raise ParseError(f"segment {index}: not an object")
        for key in ("start", "end", "text"):
            if key not in raw:
                raise ParseError(f"segment {index}: missing field {key!r}")
        try:
            start, end = float(raw["start"]), float(raw["end"])
        except (TypeError, ValueError):
            raise ParseError(f"segment {index}: non-numeric start/end") from None
        try:
            segments.append(
                TranscriptSegment(
                    interval=TimeInterval(start, end),
                    text=str(raw["text"]),
                    speaker=raw.get("speaker"),
                    confidence=raw.get("confidence"),
                    non_speech=bool(raw.get("non_speech", False)),
                )
            )
        except ValueError as exc:
            raise ParseError(f"segment {index}: {exc}") from None
    segments.sort(key=lambda s: (s.start, s.end))
    return str(document["recording"]), segments


def write_transcript(recording_id: str, segments: list[TranscriptSegment]) -> str:
    """Serialize a transcript document (inverse of :func:`parse_transcript`)."""
    payload = {
        "recording": recording_id,
        "segments": [
            {
                "start": seg.start,
                "end": seg.end,
                "text": seg.text,
                **({"speaker": seg.speaker} if seg.speaker is not None else {}),
                **(
                    {"confidence": seg.confidence}
                    if seg.confidence is not None
                    else {}
                ),
                **({"non_speech": True} if seg.non_speech else {}),
            }
            for seg in sorted(segments, key=lambda s: (s.start, s.end))
        ],
    }
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def parse_embeddings(source) -> list[EmbeddingRecord]:
    """Parse line-delimited embedding records, enforcing a uniform dimension."""
    records: list[EmbeddingRecord] = []
    dimension: int | None = None
    for lineno, line in enumerate(_as_text(source).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ParseError(f"line {lineno}: not an object")
        for key in ("start", "end", "vector"):
            if key not in raw:
                raise ParseError(f"line {lineno}: missing field {key!r}")
        if not isinstance(raw["vector"], list):
            raise ParseError(f"line {lineno}: vector must be an array")
        try:
            vector = tuple(float(v) for v in raw["vector"])
            start, end = float(raw["start"]), float(raw["end"])
        except (TypeError, ValueError):
            raise ParseError(f"line {lineno}: non-numeric value") from None
        if dimension is None:
            dimension = len(vector)
        elif len(vector) != dimension:
            raise ParseError(f"line {lineno}: dim {len(vector)} != {dimension}")
        try:
            records.append(EmbeddingRecord(TimeInterval(start, end), vector))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    return records


def write_embeddings(records: list[EmbeddingRecord]) -> str:
    """Serialize embedding records as JSON lines, preserving order."""
    out = io.StringIO()
    for record in records:
        json.dump(
            {
                "start": record.interval.start,
                "end": record.interval.end,
                "vector": list(record.vector),
            },
            out,
        )
        out.write("\n")
    return out.getvalue()
