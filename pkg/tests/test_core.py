import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filmvoices.core import (
    Annotation,
    SpeakerTurn,
    TimeInterval,
    Timeline,
    elementary_intervals,
    merge_same_speaker,
)
from randgen import random_annotation


def turn(start, end, speaker):
    return SpeakerTurn(TimeInterval(start, end), speaker)


class TestTimeInterval:
    def test_duration(self):
        assert TimeInterval(1.5, 4.0).duration == 2.5

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            TimeInterval(2.0, 2.0)

    def test_inverted_rejected(self):
        with pytest.raises(ValueError):
            TimeInterval(3.0, 1.0)

    def test_negative_start_rejected(self):
        with pytest.raises(ValueError):
            TimeInterval(-0.5, 1.0)

    def test_overlap_and_gap(self):
        a, b = TimeInterval(0, 2), TimeInterval(1, 3)
        assert a.overlap(b) == 1.0
        assert a.gap_to(b) == 0.0
        c = TimeInterval(5, 6)
        assert a.overlap(c) == 0.0
        assert a.gap_to(c) == 3.0


class TestSpeakerTurn:
    def test_whitespace_label_rejected(self):
        with pytest.raises(ValueError):
            turn(0, 1, "two words")

    def test_empty_label_rejected(self):
        with pytest.raises(ValueError):
            turn(0, 1, "")

    def test_case_sensitive_labels(self):
        a = Annotation("r", (turn(0, 1, "Duke"), turn(2, 3, "duke")))
        assert a.speakers == ["Duke", "duke"]


class TestMergeSameSpeaker:
    def test_overlapping_same_speaker_coalesces(self):
        result = merge_same_speaker([turn(0, 2, "A"), turn(1, 3, "A")])
        assert [(t.start, t.end, t.speaker) for t in result.turns] == [(0, 3, "A")]

    def test_cross_speaker_overlap_preserved(self):
        result = merge_same_speaker([turn(0, 2, "A"), turn(1, 3, "B")])
        assert len(result.turns) == 2

    def test_touching_intervals_coalesce(self):
        result = merge_same_speaker([turn(0, 1, "A"), turn(1, 2, "A")])
        assert [(t.start, t.end) for t in result.turns] == [(0, 2)]

    def test_turn_sort_order(self):
        result = merge_same_speaker(
            [turn(5, 6, "b"), turn(0, 2, "z"), turn(0, 1, "a"), turn(0, 2, "a")]
        )
        assert [(t.start, t.end, t.speaker) for t in result.turns] == [
            (0, 2, "a"),
            (0, 2, "z"),
            (5, 6, "b"),
        ]

    def test_idempotent_on_random_annotations(self):
        rng = random.Random(7)
        for _ in range(50):
            a = random_annotation(rng)
            assert Annotation(a.recording_id, a.turns) == a


class TestTimeline:
    def test_coalesces_adjacent_and_overlapping(self):
        t = Timeline("r", (TimeInterval(0, 1), TimeInterval(1, 2), TimeInterval(1.5, 4)))
        assert [(iv.start, iv.end) for iv in t.intervals] == [(0, 4)]
        assert t.duration == 4.0

    def test_keeps_gaps(self):
        t = Timeline("r", (TimeInterval(0, 1), TimeInterval(2, 3)))
        assert len(t.intervals) == 2


class TestElementaryIntervals:
    def test_worked_example(self):
        # Boundary set {0, 8, 10, 12}, enumerated by hand.
        a = Annotation("r", (turn(0, 10, "A"),))
        b = Annotation("r", (turn(0, 8, "X"), turn(8, 12, "Y")))
        got = [
            ((iv.start, iv.end), set(sa), set(sb))
            for iv, sa, sb in elementary_intervals(a, b)
        ]
        assert got == [
            ((0, 8), {"A"}, {"X"}),
            ((8, 10), {"A"}, {"Y"}),
            ((10, 12), set(), {"Y"}),
        ]

    def test_identity(self):
        a = Annotation("r", (turn(0, 1, "A"),))
        got = elementary_intervals(a, a)
        assert [(iv.start, iv.end) for iv, _, _ in got] == [(0, 1)]
        assert got[0][1] == got[0][2] == frozenset({"A"})

    def test_one_sided(self):
        a = Annotation("r")
        b = Annotation("r", (turn(2, 3, "X"),))
        got = elementary_intervals(a, b)
        assert [((iv.start, iv.end), set(sa), set(sb)) for iv, sa, sb in got] == [
            ((2, 3), set(), {"X"})
        ]

    def test_empty_both(self):
        assert elementary_intervals(Annotation("r"), Annotation("r")) == []

    def test_recording_mismatch_rejected(self):
        with pytest.raises(ValueError):
            elementary_intervals(Annotation("r1"), Annotation("r2"))

    def test_partition_and_conservation_on_random_pairs(self):
        rng = random.Random(11)
        for _ in range(50):
            a = random_annotation(rng, max_turns=15)
            b = random_annotation(rng, max_turns=15)
            parts = elementary_intervals(a, b)
            # Pairwise disjoint and sorted.
            for (iv1, _, _), (iv2, _, _) in zip(parts, parts[1:]):
                assert iv1.end <= iv2.start
            # Union covers exactly the union of all input turns.
            covered = Timeline("r", tuple(iv for iv, _, _ in parts))
            union = Timeline(
                "r", tuple(t.interval for t in a.turns + b.turns)
            )
            assert covered == union
            # Speaker-weighted duration conserves per-side speech time.
            weighted_a = sum(iv.duration * len(sa) for iv, sa, _ in parts)
            assert weighted_a == pytest.approx(a.speech_duration(), abs=1e-9)
            weighted_b = sum(iv.duration * len(sb) for iv, _, sb in parts)
            assert weighted_b == pytest.approx(b.speech_duration(), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(0, 500),
            st.integers(1, 100),
            st.sampled_from(["a", "b", "c"]),
        ),
        min_size=1,
        max_size=20,
    )
)
def test_coalescing_idempotent_property(raw):
    turns = [turn(s / 10, (s + d) / 10, spk) for s, d, spk in raw]
    once = merge_same_speaker(turns)
    assert merge_same_speaker(list(once.turns)) == once
    # No same-speaker pair overlaps or touches after construction.
    by_speaker: dict[str, list] = {}
    for t in once.turns:
        by_speaker.setdefault(t.speaker, []).append(t.interval)
    for ivs in by_speaker.values():
        for left, right in zip(ivs, ivs[1:]):
            assert right.start > left.end
