"""Seeded random fixtures shared across the test suite.

Times are built on a 10 ms grid as integer-unit divisions so the float
values round-trip cleanly through 3-decimal rendering.
"""

from __future__ import annotations

import random

from filmvoices.core import Annotation, SpeakerTurn, TimeInterval


def grid_time(units: int, grid_units_per_s: int = 100) -> float:
    return units / grid_units_per_s


def random_annotation(
    rng: random.Random,
    recording_id: str = "rec",
    max_speakers: int = 5,
    max_turns: int = 40,
    horizon_s: float = 60.0,
    min_dur_units: int = 20,
    max_dur_units: int = 400,
) -> Annotation:
    """Random annotation with turn boundaries on a 10 ms grid."""
    n_speakers = rng.randint(1, max_speakers)
    n_turns = rng.randint(1, max_turns)
    horizon_units = int(horizon_s * 100)
    turns = []
    for _ in range(n_turns):
        dur = rng.randint(min_dur_units, max_dur_units)
        start = rng.randint(0, max(0, horizon_units - dur))
        turns.append(
            SpeakerTurn(
                TimeInterval(grid_time(start), grid_time(start + dur)),
                f"s{rng.randrange(n_speakers)}",
            )
        )
    return Annotation(recording_id, tuple(turns))


def random_pair(rng: random.Random, recording_id: str = "rec", **kwargs):
    """A (reference, hypothesis) pair over the same recording."""
    ref = random_annotation(rng, recording_id, **kwargs)
    hyp = random_annotation(rng, recording_id, **kwargs)
    return ref, hyp
