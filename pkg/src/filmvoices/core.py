"""Domain types and interval/timeline algebra shared by every pipeline stage.

All types are immutable after construction and all operations are pure
functions, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class TimeInterval:
    """A strictly positive-length time span, in seconds."""

    start: float
    end: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "end", float(self.end))
        if self.start < 0:
            raise ValueError(f"interval start must be >= 0, got {self.start}")
        if self.end <= self.start:
            raise ValueError(
                f"interval end must be > start, got [{self.start}, {self.end}]"
            )

    @property
    def duration(self) -> float:
        return self.end - self.start

    def overlap(self, other: "TimeInterval") -> float:
        """Duration of the intersection with ``other`` (0.0 if disjoint)."""
        return max(0.0, min(self.end, other.end) - max(self.start, other.start))

    def gap_to(self, other: "TimeInterval") -> float:
        """Distance between the two intervals (0.0 if they touch or overlap)."""
        return max(0.0, other.start - self.end, self.start - other.end)


@dataclass(frozen=True, order=True)
class SpeakerTurn:
    """One speech interval attributed to a speaker."""

    interval: TimeInterval
    speaker: str

    def __post_init__(self) -> None:
        if not self.speaker:
            raise ValueError("speaker label must be non-empty")
        if any(c.isspace() for c in self.speaker):
            raise ValueError(
                f"speaker label must not contain whitespace: {self.speaker!r}"
            )

    @property
    def start(self) -> float:
        return self.interval.start

    @property
    def end(self) -> float:
        return self.interval.end


def _coalesce_intervals(intervals: list[TimeInterval]) -> list[TimeInterval]:
    """Merge overlapping or touching intervals into a disjoint sorted list."""
    merged: list[TimeInterval] = []
    for iv in sorted(intervals):
        if merged and iv.start <= merged[-1].end:
            if iv.end > merged[-1].end:
                merged[-1] = TimeInterval(merged[-1].start, iv.end)
        else:
            merged.append(iv)
    return merged


@dataclass(frozen=True)
class Annotation:
    """A speaker-labeled timeline for one recording.

    Turns are kept sorted by (start, end, speaker).  Overlapping turns of
    different speakers are legal (overlapped speech exists in reference
    data); overlapping or touching turns of the same speaker are coalesced
    on construction, so one speaker never overlaps themself.
    """

    recording_id: str
    turns: tuple[SpeakerTurn, ...] = ()

    def __post_init__(self) -> None:
        by_speaker: dict[str, list[TimeInterval]] = {}
        for turn in self.turns:
            by_speaker.setdefault(turn.speaker, []).append(turn.interval)
        merged = [
            SpeakerTurn(iv, spk)
            for spk, ivs in by_speaker.items()
            for iv in _coalesce_intervals(ivs)
        ]
        merged.sort(key=lambda t: (t.start, t.end, t.speaker))
        object.__setattr__(self, "turns", tuple(merged))

    @property
    def speakers(self) -> list[str]:
        return sorted({t.speaker for t in self.turns})

    def speech_duration(self, speaker: str | None = None) -> float:
        """Total turn duration, optionally restricted to one speaker."""
        return sum(
            t.interval.duration
            for t in self.turns
            if speaker is None or t.speaker == speaker
        )


@dataclass(frozen=True)
class Timeline:
    """Unlabeled speech regions for one recording (e.g. VAD output).

    Intervals are sorted and pairwise disjoint; adjacent or overlapping
    intervals are coalesced on construction.
    """

    recording_id: str
    intervals: tuple[TimeInterval, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "intervals", tuple(_coalesce_intervals(list(self.intervals)))
        )

    @property
    def duration(self) -> float:
        return sum(iv.duration for iv in self.intervals)


def merge_same_speaker(
    turns: list[SpeakerTurn], recording_id: str = ""
) -> Annotation:
    """Coalesce each speaker's overlapping or touching turns into an Annotation."""
    return Annotation(recording_id, tuple(turns))


ElementaryInterval = tuple[TimeInterval, frozenset, frozenset]


def elementary_intervals(a: Annotation, b: Annotation) -> list[ElementaryInterval]:
    """Partition the covered time axis into spans of constant speaker activity.

    The union of all turn boundaries from both annotations cuts the axis into
    elementary intervals; within each, the sets of active speakers of ``a``
    and ``b`` are constant.  Intervals where both sets are empty are omitted,
    so the returned intervals exactly cover the union of all input turns.

    Returns a sorted list of (interval, speakers_in_a, speakers_in_b).
    """
    if a.recording_id != b.recording_id:
        raise ValueError(
            f"annotations describe different recordings: "
            f"{a.recording_id!r} vs {b.recording_id!r}"
        )
    boundaries = sorted(
        {t.start for t in a.turns}
        | {t.end for t in a.turns}
        | {t.start for t in b.turns}
        | {t.end for t in b.turns}
    )
    if len(boundaries) < 2:
        return []

    def active_sets(annotation: Annotation) -> list[frozenset]:
        # Sweep: per elementary span, collect speakers whose turn covers it.
        # Turn boundaries always coincide with span boundaries, so a turn
        # covers a span iff it covers its left edge.
        sets = [set() for _ in range(len(boundaries) - 1)]
        index = {t: i for i, t in enumerate(boundaries)}
        for turn in annotation.turns:
            for i in range(index[turn.start], index[turn.end]):
                sets[i].add(turn.speaker)
        return [frozenset(s) for s in sets]

    in_a = active_sets(a)
    in_b = active_sets(b)
    return [
        (TimeInterval(boundaries[i], boundaries[i + 1]), in_a[i], in_b[i])
        for i in range(len(boundaries) - 1)
        if in_a[i] or in_b[i]
    ]
