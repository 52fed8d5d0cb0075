"""Diarization Error Rate scoring with optimal speaker mapping.

DER is the fraction of speaker-weighted reference speech time that is
missed, falsely detected, or attributed to the wrong speaker under the
error-minimizing one-to-one correspondence between hypothesis and
reference speakers.  It can exceed 1.0 when hypothesis output is large
relative to the reference or under overlapped speech.

Scoring is interval-exact: elementary intervals (spans on which both
annotations' active speaker sets are constant) are accumulated directly,
with no frame quantization.  An optional collar excludes time within
+/- collar_s of every reference turn boundary.  The speaker mapping is
computed once per recording from the full, collar-free overlap matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Annotation, elementary_intervals

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DerReport:
    """Decomposition of diarization error for one recording."""

    missed_s: float
    false_alarm_s: float
    confusion_s: float
    total_ref_s: float
    der: float
    mapping: dict[str, str] = field(default_factory=dict)
    collar_s: float = 0.0
    score_overlap: bool = True
    recording_id: str = ""


@dataclass(frozen=True)
class CorpusReport:
    """Aggregate over a corpus, computed two ways.

    ``der_time_weighted`` sums error components over all recordings and
    divides by the summed reference time; ``der_mean`` is the unweighted
    mean of per-recording DER values.
    """

    reports: dict[str, DerReport]
    missed_s: float
    false_alarm_s: float
    confusion_s: float
    total_ref_s: float
    der_time_weighted: float
    der_mean: float
    unscored: dict[str, str] = field(default_factory=dict)


def _assignment_max(matrix: np.ndarray) -> float:
    """Maximum total of a one-to-one (rectangular) assignment."""
    if matrix.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    return float(matrix[rows, cols].sum())


def optimal_mapping(ref: Annotation, hyp: Annotation) -> dict[str, str]:
    """Error-minimizing one-to-one map hypothesis-speaker -> reference-speaker.

    Builds the reference x hypothesis overlap-duration matrix (total
    co-occurring speech time per pair over elementary intervals) and keeps
    the assignment maximizing total mapped overlap.  Ties are broken toward
    lexicographically smallest (ref, hyp) label pairs; pairs with zero
    overlap and hypothesis speakers left unassigned are omitted.
    """
    ref_speakers = ref.speakers
    hyp_speakers = hyp.speakers
    if not ref_speakers or not hyp_speakers:
        return {}
    ref_index = {s: i for i, s in enumerate(ref_speakers)}
    hyp_index = {s: i for i, s in enumerate(hyp_speakers)}
    matrix = np.zeros((len(ref_speakers), len(hyp_speakers)))
    for interval, in_ref, in_hyp in elementary_intervals(ref, hyp):
        for r in in_ref:
            for h in in_hyp:
                matrix[ref_index[r], hyp_index[h]] += interval.duration

    # Greedy lexicographic fixing: walk candidate pairs in (ref, hyp) label
    # order and keep a pair whenever it still extends to an assignment of
    # optimal total.  This yields the lexicographically smallest optimum.
    # Zero-overlap pairs never enter the mapping, so they are never fixed
    # (fixing one could steal a column from a smaller positive pair).
    remaining_total = _assignment_max(matrix)
    eps = 1e-9 * max(1.0, remaining_total)
    open_rows = list(range(len(ref_speakers)))
    open_cols = list(range(len(hyp_speakers)))
    mapping: dict[str, str] = {}
    for r in range(len(ref_speakers)):
        if remaining_total <= eps:
            break
        for h in open_cols:
            if matrix[r, h] <= 0:
                continue
            rest_rows = [i for i in open_rows if i != r]
            rest_cols = [j for j in open_cols if j != h]
            rest_best = _assignment_max(matrix[np.ix_(rest_rows, rest_cols)])
            if matrix[r, h] + rest_best >= remaining_total - eps:
                mapping[hyp_speakers[h]] = ref_speakers[r]
                remaining_total -= matrix[r, h]
                open_rows = rest_rows
                open_cols = rest_cols
                break
    return mapping


def _collar_zones(ref: Annotation, collar_s: float) -> list[tuple[float, float]]:
    """Coalesced no-score zones of +/- collar_s around reference boundaries."""
    if collar_s <= 0:
        return []
    edges = sorted({t.start for t in ref.turns} | {t.end for t in ref.turns})
    zones: list[tuple[float, float]] = []
    for edge in edges:
        lo, hi = edge - collar_s, edge + collar_s
        if zones and lo <= zones[-1][1]:
            zones[-1] = (zones[-1][0], max(zones[-1][1], hi))
        else:
            zones.append((lo, hi))
    return zones


def _scored_duration(
    start: float, end: float, zones: list[tuple[float, float]]
) -> float:
    """Duration of [start, end] remaining after removing the no-score zones."""
    remaining = end - start
    for lo, hi in zones:
        if lo >= end:
            break
        remaining -= max(0.0, min(end, hi) - max(start, lo))
    return max(0.0, remaining)


def score_der(
    ref: Annotation,
    hyp: Annotation,
    collar_s: float = 0.25,
    score_overlap: bool = True,
) -> DerReport:
    """Score one hypothesis annotation against its reference.

    When ``collar_s`` > 0, time within +/- collar_s of any reference turn
    boundary is excluded from scoring.  When ``score_overlap`` is False,
    spans where the reference has more than one active speaker are excluded.
    Per remaining elementary interval of duration d with reference speaker
    set R and hypothesis speaker set H under mapping M:

        missed      += d * max(0, |R| - |H|)
        false_alarm += d * max(0, |H| - |R|)
        confusion   += d * (min(|R|, |H|) - |{h in H : M(h) in R}|)
        total_ref   += d * |R|
    """
    if collar_s < 0:
        raise ValueError(f"collar must be >= 0, got {collar_s}")
    mapping = optimal_mapping(ref, hyp)
    zones = _collar_zones(ref, collar_s)

    missed = false_alarm = confusion = total_ref = 0.0
    for interval, in_ref, in_hyp in elementary_intervals(ref, hyp):
        if not score_overlap and len(in_ref) > 1:
            continue
        d = _scored_duration(interval.start, interval.end, zones)
        if d <= 0.0:
            continue
        n_ref, n_hyp = len(in_ref), len(in_hyp)
        matched = sum(1 for h in in_hyp if mapping.get(h) in in_ref)
        missed += d * max(0, n_ref - n_hyp)
        false_alarm += d * max(0, n_hyp - n_ref)
        confusion += d * (min(n_ref, n_hyp) - matched)
        total_ref += d * n_ref

    if total_ref <= 0.0:
        raise ValueError("no scorable reference speech")
    return DerReport(
        missed_s=missed,
        false_alarm_s=false_alarm,
        confusion_s=confusion,
        total_ref_s=total_ref,
        der=(missed + false_alarm + confusion) / total_ref,
        mapping=mapping,
        collar_s=collar_s,
        score_overlap=score_overlap,
        recording_id=ref.recording_id,
    )


def score_corpus(
    pairs: list[tuple[Annotation, Annotation]],
    collar_s: float = 0.25,
    score_overlap: bool = True,
) -> tuple[dict[str, DerReport], CorpusReport]:
    """Score a corpus of (reference, hypothesis) pairs.

    The speaker mapping is computed independently per recording.  Recordings
    that fail to score are excluded from both aggregates with a warning.
    """
    if not pairs:
        raise ValueError("score_corpus needs at least one (ref, hyp) pair")
    reports: dict[str, DerReport] = {}
    unscored: dict[str, str] = {}
    for ref, hyp in pairs:
        try:
            reports[ref.recording_id] = score_der(ref, hyp, collar_s, score_overlap)
        except ValueError as exc:
            logger.warning("recording %r not scored: %s", ref.recording_id, exc)
            unscored[ref.recording_id] = str(exc)
    if not reports:
        raise ValueError("no scorable recordings in corpus")

    missed = sum(r.missed_s for r in reports.values())
    false_alarm = sum(r.false_alarm_s for r in reports.values())
    confusion = sum(r.confusion_s for r in reports.values())
    total_ref = sum(r.total_ref_s for r in reports.values())
    aggregate = CorpusReport(
        reports=reports,
        missed_s=missed,
        false_alarm_s=false_alarm,
        confusion_s=confusion,
        total_ref_s=total_ref,
        der_time_weighted=(missed + false_alarm + confusion) / total_ref,
        der_mean=sum(r.der for r in reports.values()) / len(reports),
        unscored=unscored,
    )
    return reports, aggregate
