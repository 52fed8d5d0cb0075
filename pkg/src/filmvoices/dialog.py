"""Attach transcripts to diarized speakers and pick the main characters.

Main speakers are the outliers of the per-speaker count of long speeches:
count turns longer than min_speech_s per speaker, then keep speakers whose
count lies strictly above the Tukey upper fence Q3 + multiplier * (Q3 - Q1)
of the count distribution.  "Frequency" is the COUNT of long speeches, not
total duration.  If nobody clears the fence the speaker(s) with the
maximal count are returned instead, so the result is never empty.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from .core import Annotation
from .ioformats import TranscriptSegment

logger = logging.getLogger(__name__)

UNKNOWN_SPEAKER = "unknown"
SNAP_GAP_S = 0.5


@dataclass(frozen=True)
class SelectionConfig:
    min_speech_s: float = 2.0
    fence_multiplier: float = 1.5

    def __post_init__(self) -> None:
        if self.min_speech_s < 0:
            raise ValueError(f"min_speech_s must be >= 0, got {self.min_speech_s}")
        if self.fence_multiplier <= 0:
            raise ValueError(
                f"fence_multiplier must be > 0, got {self.fence_multiplier}"
            )


@dataclass(frozen=True)
class SpeakerDossier:
    """One speaker's utterances in temporal order, ready for analysis."""

    speaker: str
    utterances: tuple[tuple[float, float, str], ...]  # (start, end, text)
    total_speech_s: float
    segment_count_over_min: int


@dataclass(frozen=True)
class SelectionReport:
    """Histogram data behind a main-speaker selection."""

    counts: dict[str, int]
    q1: float
    q3: float
    fence: float
    selected: tuple[str, ...]
    fallback: bool
    min_speech_s: float


def align_transcript(
    diarization: Annotation,
    transcript: list[TranscriptSegment],
    snap_gap_s: float = SNAP_GAP_S,
) -> list[TranscriptSegment]:
    """Assign each transcript segment the diarized speaker it overlaps most.

    Ties go to the speaker whose overlapping turn starts earliest, then to
    the smaller label.  Segments overlapping no turn snap to the nearest
    turn's speaker when the gap is <= snap_gap_s, else they are labeled
    "unknown".  Pre-existing speaker fields are overwritten.
    """
    aligned = []
    for segment in transcript:
        overlap_by_speaker: dict[str, float] = {}
        earliest_start: dict[str, float] = {}
        for turn in diarization.turns:
            ov = turn.interval.overlap(segment.interval)
            if ov > 0:
                overlap_by_speaker[turn.speaker] = (
                    overlap_by_speaker.get(turn.speaker, 0.0) + ov
                )
                if turn.speaker not in earliest_start:
                    earliest_start[turn.speaker] = turn.start
        if overlap_by_speaker:
            best = max(overlap_by_speaker.values())
            speaker = min(
                (s for s, v in overlap_by_speaker.items() if v == best),
                key=lambda s: (earliest_start[s], s),
            )
        else:
            nearest = min(
                (
                    (turn.interval.gap_to(segment.interval), turn.start, turn.speaker)
                    for turn in diarization.turns
                ),
                default=None,
            )
            if nearest is not None and nearest[0] <= snap_gap_s:
                speaker = nearest[2]
            else:
                speaker = UNKNOWN_SPEAKER
        aligned.append(replace(segment, speaker=speaker))
    return aligned


def _quantile(sorted_values: list[float], q: float) -> float:
    # Linear interpolation between order statistics at position q * (n - 1).
    position = q * (len(sorted_values) - 1)
    lower = int(position)
    upper = min(lower + 1, len(sorted_values) - 1)
    fraction = position - lower
    return sorted_values[lower] * (1 - fraction) + sorted_values[upper] * fraction


def selection_report(
    diarization: Annotation, cfg: SelectionConfig = SelectionConfig()
) -> SelectionReport:
    """Count long speeches per speaker and apply the upper-fence rule."""
    if not diarization.turns:
        raise ValueError("cannot select main speakers from an empty annotation")
    counts = {
        speaker: sum(
            1
            for t in diarization.turns
            if t.speaker == speaker and t.interval.duration > cfg.min_speech_s
        )
        for speaker in diarization.speakers
    }
    if all(c == 0 for c in counts.values()):
        raise ValueError("no speech segments exceed minimum duration")
    values = sorted(float(c) for c in counts.values())
    q1 = _quantile(values, 0.25)
    q3 = _quantile(values, 0.75)
    fence = q3 + cfg.fence_multiplier * (q3 - q1)
    selected = [s for s, c in counts.items() if c > fence]
    fallback = not selected
    if fallback:
        top = max(counts.values())
        selected = [s for s, c in counts.items() if c == top]
    selected.sort(key=lambda s: (-counts[s], s))
    return SelectionReport(
        counts=counts,
        q1=q1,
        q3=q3,
        fence=fence,
        selected=tuple(selected),
        fallback=fallback,
        min_speech_s=cfg.min_speech_s,
    )


def select_main_speakers(
    diarization: Annotation, cfg: SelectionConfig = SelectionConfig()
) -> list[str]:
    """Speakers whose long-speech count lies strictly above the upper fence."""
    return list(selection_report(diarization, cfg).selected)


def build_dossiers(
    aligned: list[TranscriptSegment],
    main: list[str],
    cfg: SelectionConfig = SelectionConfig(),
) -> list[SpeakerDossier]:
    """Aggregate aligned utterances into one dossier per main speaker.

    Text is passed through untouched.  Main speakers with no aligned
    utterances are omitted with a warning; "unknown" never gets a dossier.
    """
    dossiers = []
    for speaker in main:
        if speaker == UNKNOWN_SPEAKER:
            logger.warning("refusing to build a dossier for %r", UNKNOWN_SPEAKER)
            continue
        utterances = sorted(
            (
                (seg.start, seg.end, seg.text)
                for seg in aligned
                if seg.speaker == speaker and not seg.non_speech
            ),
            key=lambda u: (u[0], u[1]),
        )
        if not utterances:
            logger.warning("main speaker %r has no aligned utterances", speaker)
            continue
        dossiers.append(
            SpeakerDossier(
                speaker=speaker,
                utterances=tuple(utterances),
                total_speech_s=sum(end - start for start, end, _ in utterances),
                segment_count_over_min=sum(
                    1 for start, end, _ in utterances if end - start > cfg.min_speech_s
                ),
            )
        )
    return dossiers
