"""Stage orchestration: run the film-audio pipeline over file contracts.

Every stage boundary is a file in a documented format (RTTM, transcript
document, embedding lines, JSON reports), so any external tool can
substitute for any stage.  Stages whose outputs exist and whose inputs
are unchanged (by content checksum) are skipped unless forced.  Artifacts
are written to temporary names and renamed on completion, so a crashed
run never leaves a partially written artifact behind.

Exactly one diarization source is active per recording:

  (a) an external hypothesis RTTM,
  (b) an embedding file that gets clustered here, or
  (c) VAD only - no speaker identities, so speaker-dependent stages are
      disabled for the run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import shlex
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .analysis import (
    CharacterCard,
    PromptTemplate,
    StubBackend,
    HttpChatBackend,
    analyze_dossiers,
    recognition_probe,
)
from .cluster import ClusterConfig, agglomerate, to_annotation
from .core import Annotation, SpeakerTurn, TimeInterval
from .dialog import (
    SelectionConfig,
    SpeakerDossier,
    align_transcript,
    build_dossiers,
    selection_report,
)
from .ioformats import parse_embeddings, parse_rttm, parse_transcript, write_rttm, write_transcript
from .metrics import DerReport, score_der
from .vad import VadConfig, detect_speech, load_wav

logger = logging.getLogger(__name__)

VAD_SPEAKER_LABEL = "speech"


@dataclass
class AnalysisConfig:
    """Which chat-completion backend to use, if any."""

    backend: str | None = None  # "stub" | "http"
    endpoint: str = ""
    model_id: str = "gpt-3.5-turbo-0125"
    credential_env: str = "FILMVOICES_API_KEY"
    film_title: str | None = None
    max_concurrent: int = 2
    requests_per_s: float = 1.0
    template_path: str | None = None
    stub_response_path: str | None = None

    def build_backend(self):
        if self.backend == "stub":
            response = None
            if self.stub_response_path:
                response = Path(self.stub_response_path).read_text(encoding="utf-8")
            return StubBackend(response)
        if self.backend == "http":
            if not self.endpoint:
                raise ValueError("http analysis backend needs an endpoint URL")
            return HttpChatBackend(
                self.endpoint, self.model_id, credential_env=self.credential_env
            )
        if self.backend:
            raise ValueError(f"unknown analysis backend {self.backend!r}")
        return None

    def template(self) -> PromptTemplate:
        if self.template_path:
            return PromptTemplate.from_file(self.template_path)
        return PromptTemplate()


@dataclass
class PipelineConfig:
    """One recording's inputs plus shared stage settings."""

    recording_id: str
    output_dir: str
    audio_path: str | None = None
    reference_rttm: str | None = None
    hypothesis_rttm: str | None = None
    embeddings_path: str | None = None
    transcript_path: str | None = None
    extract_cmd: str | None = None
    vad: VadConfig = field(default_factory=VadConfig)
    cluster: ClusterConfig = field(default_factory=lambda: ClusterConfig.threshold(0.5))
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    collar_s: float = 0.25
    score_overlap: bool = True
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    force: bool = False

    def validate(self) -> str:
        """Check source exclusivity; returns the active diarization source."""
        if self.hypothesis_rttm and self.embeddings_path:
            raise ValueError(
                "configure either an external hypothesis RTTM or an embedding "
                "file, not both"
            )
        if self.hypothesis_rttm:
            source = "external"
        elif self.embeddings_path:
            source = "cluster"
        elif self.audio_path:
            source = "vad-only"
        else:
            raise ValueError(
                f"recording {self.recording_id!r} has no diarization source "
                "(hypothesis RTTM, embeddings, or audio)"
            )
        for label, path in (
            ("audio", self.audio_path),
            ("reference RTTM", self.reference_rttm),
            ("hypothesis RTTM", self.hypothesis_rttm),
            ("embeddings", self.embeddings_path),
            ("transcript", self.transcript_path),
        ):
            if path and not Path(path).exists():
                raise FileNotFoundError(f"{label} file not found: {path}")
        return source


@dataclass
class StageRecord:
    name: str
    status: str  # ok | skipped | failed | disabled
    wall_s: float = 0.0
    outputs: list[str] = field(default_factory=list)
    reason: str | None = None


@dataclass
class RunManifest:
    recording_id: str
    source: str
    tool_version: str
    config: dict
    stages: list[StageRecord] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(s.status == "failed" for s in self.stages)

    def stage(self, name: str) -> StageRecord | None:
        for record in self.stages:
            if record.name == name:
                return record
        return None

    def to_dict(self) -> dict:
        return {
            "recording_id": self.recording_id,
            "source": self.source,
            "tool_version": self.tool_version,
            "config": self.config,
            "stages": [asdict(s) for s in self.stages],
            "warnings": self.warnings,
        }


def atomic_write(path: Path, data: str) -> None:
    """Write via a temporary name and rename, so readers never see partials."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def _fingerprint(input_paths: list[Path], params: str) -> str:
    digest = hashlib.sha256()
    digest.update(params.encode("utf-8"))
    for path in input_paths:
        digest.update(b"\x00")
        digest.update(str(path).encode("utf-8"))
        digest.update(b"\x00")
        digest.update(path.read_bytes())
    return digest.hexdigest()


class _StageCache:
    """Per-output-dir record of each stage's input fingerprint and outputs."""

    def __init__(self, output_dir: Path, recording_id: str):
        self.path = output_dir / f"{recording_id}.stage_cache.json"
        try:
            self.entries = json.loads(self.path.read_text(encoding="utf-8"))
        except (FileNotFoundError, json.JSONDecodeError):
            self.entries = {}

    def is_fresh(self, stage: str, fingerprint: str) -> bool:
        entry = self.entries.get(stage)
        return (
            entry is not None
            and entry.get("fingerprint") == fingerprint
            and all(Path(p).exists() for p in entry.get("outputs", []))
        )

    def outputs(self, stage: str) -> list[str]:
        return list(self.entries.get(stage, {}).get("outputs", []))

    def store(self, stage: str, fingerprint: str, outputs: list[str]) -> None:
        self.entries[stage] = {"fingerprint": fingerprint, "outputs": outputs}
        atomic_write(self.path, json.dumps(self.entries, indent=2))


class _Runner:
    def __init__(self, config: PipelineConfig, manifest: RunManifest):
        self.config = config
        self.manifest = manifest
        self.output_dir = Path(config.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.cache = _StageCache(self.output_dir, config.recording_id)

    def run_stage(
        self,
        name: str,
        inputs: list[Path],
        params: str,
        fn,
        requires: list[str] = (),
    ) -> StageRecord:
        """Execute one stage with checksum caching and failure propagation."""
        for upstream in requires:
            record = self.manifest.stage(upstream)
            if record is not None and record.status == "failed":
                skipped = StageRecord(
                    name, "skipped", reason=f"upstream stage {upstream!r} failed"
                )
                self.manifest.stages.append(skipped)
                return skipped
        try:
            fingerprint = _fingerprint(inputs, params)
        except OSError as exc:
            failed = StageRecord(name, "failed", reason=f"unreadable input: {exc}")
            self.manifest.stages.append(failed)
            return failed
        if not self.config.force and self.cache.is_fresh(name, fingerprint):
            record = StageRecord(
                name,
                "skipped",
                outputs=self.cache.outputs(name),
                reason="inputs unchanged",
            )
            self.manifest.stages.append(record)
            return record
        started = time.monotonic()
        try:
            outputs = [str(p) for p in fn()]
        except Exception as exc:
            logger.exception("stage %r failed for %r", name, self.config.recording_id)
            record = StageRecord(
                name, "failed", wall_s=time.monotonic() - started, reason=str(exc)
            )
            self.manifest.stages.append(record)
            return record
        self.cache.store(name, fingerprint, outputs)
        record = StageRecord(
            name, "ok", wall_s=time.monotonic() - started, outputs=outputs
        )
        self.manifest.stages.append(record)
        return record

    def disable(self, name: str, reason: str) -> StageRecord:
        record = StageRecord(name, "disabled", reason=reason)
        self.manifest.stages.append(record)
        return record

    def out(self, suffix: str) -> Path:
        return self.output_dir / f"{self.config.recording_id}{suffix}"


def run(config: PipelineConfig) -> RunManifest:
    """Execute all configured stages for one recording, in dependency order."""
    source = config.validate()
    manifest = RunManifest(
        recording_id=config.recording_id,
        source=source,
        tool_version=__version__,
        config=_config_snapshot(config),
    )
    runner = _Runner(config, manifest)
    rec = config.recording_id

    # -- extract: shell out to the configured demuxer command.
    wav_path = Path(config.audio_path) if config.audio_path else None
    if config.extract_cmd and config.audio_path:
        extracted = runner.out(".extracted.wav")

        def extract():
            command = [
                part.format(input=config.audio_path, output=str(extracted))
                for part in shlex.split(config.extract_cmd)
            ]
            subprocess.run(command, check=True, capture_output=True)
            if not extracted.exists():
                raise RuntimeError(f"extraction command produced no {extracted}")
            return [extracted]

        record = runner.run_stage(
            "extract", [Path(config.audio_path)], config.extract_cmd, extract
        )
        if record.status in ("ok", "skipped") and extracted.exists():
            wav_path = extracted

    # -- vad: only diarization source for VAD-only runs.
    if source == "vad-only":
        vad_out = runner.out(".vad.rttm")

        def vad_stage():
            audio = load_wav(wav_path)
            timeline = detect_speech(audio, config.vad, recording_id=rec)
            annotation = Annotation(
                rec,
                tuple(
                    SpeakerTurn(interval, VAD_SPEAKER_LABEL)
                    for interval in timeline.intervals
                ),
            )
            atomic_write(vad_out, write_rttm(annotation))
            return [vad_out]

        runner.run_stage(
            "vad", [wav_path], repr(config.vad), vad_stage, requires=["extract"]
        )

    # -- cluster: embeddings -> hypothesis RTTM.
    hypothesis_path: Path | None = None
    if source == "external":
        hypothesis_path = Path(config.hypothesis_rttm)
    elif source == "cluster":
        hypothesis_path = runner.out(".hypothesis.rttm")
        clustered = hypothesis_path

        def cluster_stage():
            records = parse_embeddings(Path(config.embeddings_path).read_text())
            if not records:
                raise ValueError(f"no embedding records in {config.embeddings_path}")
            result = agglomerate(records, config.cluster)
            annotation = to_annotation(records, result, rec)
            atomic_write(clustered, write_rttm(annotation))
            return [clustered]

        runner.run_stage(
            "cluster",
            [Path(config.embeddings_path)],
            repr(config.cluster),
            cluster_stage,
        )

    def load_hypothesis() -> Annotation:
        parsed = parse_rttm(hypothesis_path.read_text(encoding="utf-8"))
        if rec in parsed:
            return parsed[rec]
        if len(parsed) == 1:
            only = next(iter(parsed.values()))
            return Annotation(rec, only.turns)
        raise ValueError(f"{hypothesis_path} has no annotation for {rec!r}")

    # -- score: needs a reference and a hypothesis.
    if config.reference_rttm and hypothesis_path is not None:
        der_out = runner.out(".der.json")

        def score_stage():
            refs = parse_rttm(Path(config.reference_rttm).read_text(encoding="utf-8"))
            if rec in refs:
                reference = refs[rec]
            elif len(refs) == 1:
                reference = Annotation(rec, next(iter(refs.values())).turns)
            else:
                raise ValueError(
                    f"{config.reference_rttm} has no annotation for {rec!r}"
                )
            report = score_der(
                reference,
                load_hypothesis(),
                collar_s=config.collar_s,
                score_overlap=config.score_overlap,
            )
            atomic_write(der_out, json.dumps(_der_dict(report), indent=2))
            return [der_out]

        runner.run_stage(
            "score",
            [Path(config.reference_rttm), hypothesis_path],
            f"collar={config.collar_s} overlap={config.score_overlap}",
            score_stage,
            requires=["cluster"],
        )
    elif config.reference_rttm:
        runner.disable("score", "no hypothesis diarization to score")
    else:
        runner.disable("score", "no reference RTTM configured")

    if hypothesis_path is None:
        for name in ("align", "select", "dossiers", "analyze"):
            runner.disable(name, "VAD-only run has no speaker identities")
        _write_manifest(runner, manifest)
        return manifest

    # -- align: transcript segments -> diarized speakers.
    aligned_out = runner.out(".aligned.json")
    if config.transcript_path:

        def align_stage():
            _, segments = parse_transcript(
                Path(config.transcript_path).read_text(encoding="utf-8")
            )
            aligned = align_transcript(load_hypothesis(), segments)
            atomic_write(aligned_out, write_transcript(rec, aligned))
            return [aligned_out]

        runner.run_stage(
            "align",
            [Path(config.transcript_path), hypothesis_path],
            "align-v1",
            align_stage,
            requires=["cluster"],
        )
    else:
        runner.disable("align", "no transcript configured")

    # -- select: main speakers + histogram data.
    histogram_out = runner.out(".histogram.json")

    def select_stage():
        report = selection_report(load_hypothesis(), config.selection)
        atomic_write(histogram_out, json.dumps(_histogram_dict(report), indent=2))
        return [histogram_out]

    runner.run_stage(
        "select",
        [hypothesis_path],
        repr(config.selection),
        select_stage,
        requires=["cluster"],
    )

    # -- dossiers: per-main-speaker utterance collections.
    dossier_dir = runner.output_dir / f"{rec}.dossiers"
    if config.transcript_path:

        def dossier_stage():
            main = json.loads(histogram_out.read_text(encoding="utf-8"))["selected"]
            _, segments = parse_transcript(aligned_out.read_text(encoding="utf-8"))
            dossiers = build_dossiers(segments, main, config.selection)
            outputs = []
            for dossier in dossiers:
                path = dossier_dir / f"{dossier.speaker}.json"
                atomic_write(path, json.dumps(_dossier_dict(dossier), indent=2))
                outputs.append(path)
            index = dossier_dir / "index.json"
            atomic_write(
                index,
                json.dumps({"speakers": [d.speaker for d in dossiers]}, indent=2),
            )
            outputs.append(index)
            return outputs

        runner.run_stage(
            "dossiers",
            [aligned_out, histogram_out],
            "dossiers-v1",
            dossier_stage,
            requires=["align", "select"],
        )
    else:
        runner.disable("dossiers", "no transcript configured")

    # -- analyze: dossiers -> character cards via the configured backend.
    if config.analysis.backend and config.transcript_path:
        cards_dir = runner.output_dir / f"{rec}.cards"
        summary_out = runner.out(".cards_summary.json")
        template = config.analysis.template()

        def analyze_stage():
            backend = config.analysis.build_backend()
            index = json.loads(
                (dossier_dir / "index.json").read_text(encoding="utf-8")
            )
            dossiers = []
            for speaker in index["speakers"]:
                raw = json.loads(
                    (dossier_dir / f"{speaker}.json").read_text(encoding="utf-8")
                )
                dossiers.append(_dossier_from_dict(raw))
            cards = analyze_dossiers(
                dossiers,
                template,
                backend,
                max_concurrent=config.analysis.max_concurrent,
                requests_per_s=config.analysis.requests_per_s,
            )
            outputs = []
            for card in cards:
                path = cards_dir / f"{card.speaker}.json"
                atomic_write(path, json.dumps(card.to_dict(), indent=2, ensure_ascii=False))
                outputs.append(path)
            summary = {
                "recording_id": rec,
                "model_id": getattr(backend, "model_id", "unknown"),
                "cards": [card.to_dict() for card in cards],
            }
            if config.analysis.film_title:
                probe = recognition_probe(cards, config.analysis.film_title)
                summary["recognition_probe"] = {
                    "true_title": config.analysis.film_title,
                    "matches": probe.matches,
                    "recognition_rate": probe.recognition_rate,
                }
            atomic_write(summary_out, json.dumps(summary, indent=2, ensure_ascii=False))
            outputs.append(summary_out)
            return outputs

        dossier_inputs = [dossier_dir / "index.json"]
        if dossier_inputs[0].exists():
            dossier_inputs += [
                dossier_dir / f"{speaker}.json"
                for speaker in json.loads(
                    dossier_inputs[0].read_text(encoding="utf-8")
                )["speakers"]
            ]
        params = (
            f"model={config.analysis.backend}:{config.analysis.model_id} "
            f"template={template.system_text}|{'|'.join(template.question_list)}"
        )
        runner.run_stage(
            "analyze", dossier_inputs, params, analyze_stage, requires=["dossiers"]
        )
    else:
        runner.disable("analyze", "no analysis backend configured")

    _write_manifest(runner, manifest)
    return manifest


def _write_manifest(runner: _Runner, manifest: RunManifest) -> None:
    atomic_write(
        runner.out(".manifest.json"), json.dumps(manifest.to_dict(), indent=2)
    )


def _config_snapshot(config: PipelineConfig) -> dict:
    snapshot = asdict(config)
    snapshot["tool_version"] = __version__
    return snapshot


def _der_dict(report: DerReport) -> dict:
    return {
        "recording_id": report.recording_id,
        "missed_s": report.missed_s,
        "false_alarm_s": report.false_alarm_s,
        "confusion_s": report.confusion_s,
        "total_ref_s": report.total_ref_s,
        "der": report.der,
        "mapping": report.mapping,
        "collar_s": report.collar_s,
        "score_overlap": report.score_overlap,
    }


def _histogram_dict(report) -> dict:
    return {
        "counts": report.counts,
        "q1": report.q1,
        "q3": report.q3,
        "fence": report.fence,
        "selected": list(report.selected),
        "fallback": report.fallback,
        "min_speech_s": report.min_speech_s,
    }


def _dossier_dict(dossier: SpeakerDossier) -> dict:
    return {
        "speaker": dossier.speaker,
        "utterances": [
            {"start": start, "end": end, "text": text}
            for start, end, text in dossier.utterances
        ],
        "total_speech_s": dossier.total_speech_s,
        "segment_count_over_min": dossier.segment_count_over_min,
    }


def _dossier_from_dict(raw: dict) -> SpeakerDossier:
    return SpeakerDossier(
        speaker=raw["speaker"],
        utterances=tuple(
            (u["start"], u["end"], u["text"]) for u in raw["utterances"]
        ),
        total_speech_s=raw["total_speech_s"],
        segment_count_over_min=raw["segment_count_over_min"],
    )


def run_corpus(configs: list[PipelineConfig], workers: int = 1) -> list[RunManifest]:
    """Run several recordings, optionally in parallel."""
    if workers <= 1 or len(configs) <= 1:
        return [run(config) for config in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, configs))


def emit_reports(manifests: list[RunManifest], output_dir: str) -> list[str]:
    """Write corpus-level reports from per-recording artifacts.

    Produces a DER table (per recording plus time-weighted and unweighted
    aggregate rows), histogram rows with the fence value, and a character
    card summary - each as CSV alongside the stage JSON documents.
    """
    out = Path(output_dir)
    written: list[str] = []

    der_rows = []
    for manifest in manifests:
        der_path = out / f"{manifest.recording_id}.der.json"
        if der_path.exists():
            der_rows.append(json.loads(der_path.read_text(encoding="utf-8")))
    if der_rows:
        table = io.StringIO()
        writer = csv.writer(table)
        writer.writerow(
            ["recording", "missed_s", "false_alarm_s", "confusion_s", "total_ref_s", "der"]
        )
        for row in der_rows:
            writer.writerow(
                [
                    row["recording_id"],
                    f"{row['missed_s']:.3f}",
                    f"{row['false_alarm_s']:.3f}",
                    f"{row['confusion_s']:.3f}",
                    f"{row['total_ref_s']:.3f}",
                    f"{row['der']:.4f}",
                ]
            )
        missed = sum(r["missed_s"] for r in der_rows)
        fa = sum(r["false_alarm_s"] for r in der_rows)
        conf = sum(r["confusion_s"] for r in der_rows)
        total = sum(r["total_ref_s"] for r in der_rows)
        weighted = (missed + fa + conf) / total
        mean = sum(r["der"] for r in der_rows) / len(der_rows)
        writer.writerow(
            [
                "TIME_WEIGHTED",
                f"{missed:.3f}",
                f"{fa:.3f}",
                f"{conf:.3f}",
                f"{total:.3f}",
                f"{weighted:.4f}",
            ]
        )
        writer.writerow(["MEAN", "", "", "", "", f"{mean:.4f}"])
        der_csv = out / "der_report.csv"
        atomic_write(der_csv, table.getvalue())
        atomic_write(
            out / "der_report.json",
            json.dumps(
                {
                    "recordings": der_rows,
                    "der_time_weighted": weighted,
                    "der_mean": mean,
                },
                indent=2,
            ),
        )
        written += [str(der_csv), str(out / "der_report.json")]

    for manifest in manifests:
        histogram_path = out / f"{manifest.recording_id}.histogram.json"
        if not histogram_path.exists():
            continue
        data = json.loads(histogram_path.read_text(encoding="utf-8"))
        table = io.StringIO()
        writer = csv.writer(table)
        writer.writerow(["speaker", "count", "selected", "fence", "fallback"])
        for speaker, count in sorted(data["counts"].items()):
            writer.writerow(
                [
                    speaker,
                    count,
                    speaker in data["selected"],
                    f"{data['fence']:.3f}",
                    data["fallback"],
                ]
            )
        histogram_csv = out / f"{manifest.recording_id}.histogram.csv"
        atomic_write(histogram_csv, table.getvalue())
        written.append(str(histogram_csv))

    card_rows = []
    for manifest in manifests:
        summary_path = out / f"{manifest.recording_id}.cards_summary.json"
        if not summary_path.exists():
            continue
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        for card in summary["cards"]:
            card_rows.append(
                [
                    manifest.recording_id,
                    card["speaker"],
                    "; ".join(card["traits"]),
                    "; ".join(card["goals"]),
                    "; ".join(card["interactions"]),
                    card["film_guess"],
                    card["parse_failed"],
                ]
            )
    if card_rows:
        table = io.StringIO()
        writer = csv.writer(table)
        writer.writerow(
            ["recording", "speaker", "traits", "goals", "interactions", "film_guess", "parse_failed"]
        )
        writer.writerows(card_rows)
        cards_csv = out / "cards_summary.csv"
        atomic_write(cards_csv, table.getvalue())
        written.append(str(cards_csv))

    return written
