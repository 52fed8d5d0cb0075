"""Command-line entry points.

Subcommands mirror the stage boundaries, so each stage can be run (or
re-run) in isolation against the documented file formats:

    filmvoices run      --config run.json [overrides]
    filmvoices score    ref.rttm hyp.rttm [--collar 0.25] [--no-overlap]
    filmvoices select   hyp.rttm [--min-speech 2.0] [--fence-multiplier 1.5]
    filmvoices align    hyp.rttm transcript.json
    filmvoices analyze  dossier_dir --backend stub|http
    filmvoices vad      audio.wav

Flag overrides always win over values from the config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import analyze_dossiers, recognition_probe
from .cluster import ClusterConfig
from .core import Annotation, SpeakerTurn
from .dialog import SelectionConfig, selection_report, align_transcript
from .ioformats import parse_rttm, parse_transcript, write_rttm, write_transcript
from .metrics import score_corpus
from .pipeline import (
    VAD_SPEAKER_LABEL,
    AnalysisConfig,
    PipelineConfig,
    _dossier_from_dict,
    atomic_write,
    emit_reports,
    run_corpus,
)
from .vad import VadConfig, detect_speech, load_wav

logger = logging.getLogger(__name__)


def _der_table(reports: dict, aggregate) -> str:
    lines = [
        f"{'recording':<20} {'miss':>9} {'fa':>9} {'conf':>9} {'total':>9} {'DER':>8}"
    ]
    for rec, r in sorted(reports.items()):
        lines.append(
            f"{rec:<20} {r.missed_s:>9.3f} {r.false_alarm_s:>9.3f} "
            f"{r.confusion_s:>9.3f} {r.total_ref_s:>9.3f} {r.der:>8.4f}"
        )
    lines.append(
        f"{'TIME_WEIGHTED':<20} {aggregate.missed_s:>9.3f} "
        f"{aggregate.false_alarm_s:>9.3f} {aggregate.confusion_s:>9.3f} "
        f"{aggregate.total_ref_s:>9.3f} {aggregate.der_time_weighted:>8.4f}"
    )
    lines.append(f"{'MEAN':<20} {'':>9} {'':>9} {'':>9} {'':>9} {aggregate.der_mean:>8.4f}")
    return "\n".join(lines)


def _cmd_score(args) -> int:
    refs = parse_rttm(Path(args.reference).read_text(encoding="utf-8"))
    hyps = parse_rttm(Path(args.hypothesis).read_text(encoding="utf-8"))
    shared = sorted(set(refs) & set(hyps))
    if not shared:
        print("no recording ids shared between reference and hypothesis", file=sys.stderr)
        return 2
    pairs = [(refs[rec], hyps[rec]) for rec in shared]
    reports, aggregate = score_corpus(
        pairs, collar_s=args.collar, score_overlap=not args.no_overlap
    )
    print(_der_table(reports, aggregate))
    if aggregate.unscored:
        for rec, why in aggregate.unscored.items():
            print(f"warning: {rec} not scored: {why}", file=sys.stderr)
    if args.out:
        out = Path(args.out)
        payload = {
            "recordings": {
                rec: {
                    "missed_s": r.missed_s,
                    "false_alarm_s": r.false_alarm_s,
                    "confusion_s": r.confusion_s,
                    "total_ref_s": r.total_ref_s,
                    "der": r.der,
                    "mapping": r.mapping,
                }
                for rec, r in reports.items()
            },
            "der_time_weighted": aggregate.der_time_weighted,
            "der_mean": aggregate.der_mean,
            "collar_s": args.collar,
            "score_overlap": not args.no_overlap,
            "unscored": aggregate.unscored,
        }
        atomic_write(out, json.dumps(payload, indent=2))
        print(f"wrote {out}")
    return 0


def _single_annotation(path: str, recording: str | None) -> Annotation:
    parsed = parse_rttm(Path(path).read_text(encoding="utf-8"))
    if recording:
        return parsed[recording]
    if len(parsed) == 1:
        return next(iter(parsed.values()))
    raise SystemExit(
        f"{path} holds {len(parsed)} recordings; pick one with --recording"
    )


def _cmd_select(args) -> int:
    annotation = _single_annotation(args.rttm, args.recording)
    cfg = SelectionConfig(
        min_speech_s=args.min_speech, fence_multiplier=args.fence_multiplier
    )
    report = selection_report(annotation, cfg)
    print(f"fence = {report.fence:.3f} (Q1 {report.q1:.3f}, Q3 {report.q3:.3f})")
    if report.fallback:
        print("no speaker above the fence; falling back to maximal count")
    for speaker in report.selected:
        print(f"{speaker}\t{report.counts[speaker]}")
    if args.out:
        atomic_write(
            Path(args.out),
            json.dumps(
                {
                    "counts": report.counts,
                    "q1": report.q1,
                    "q3": report.q3,
                    "fence": report.fence,
                    "selected": list(report.selected),
                    "fallback": report.fallback,
                },
                indent=2,
            ),
        )
        print(f"wrote {args.out}")
    return 0


def _cmd_align(args) -> int:
    annotation = _single_annotation(args.rttm, args.recording)
    recording, segments = parse_transcript(
        Path(args.transcript).read_text(encoding="utf-8")
    )
    aligned = align_transcript(annotation, segments)
    document = write_transcript(recording, aligned)
    if args.out:
        atomic_write(Path(args.out), document)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(document)
    return 0


def _cmd_analyze(args) -> int:
    analysis = AnalysisConfig(
        backend=args.backend,
        endpoint=args.endpoint or "",
        model_id=args.model,
        credential_env=args.credential_env,
        film_title=args.film_title,
        template_path=args.template,
        stub_response_path=args.stub_response,
    )
    backend = analysis.build_backend()
    dossier_dir = Path(args.dossier_dir)
    index_path = dossier_dir / "index.json"
    if index_path.exists():
        speakers = json.loads(index_path.read_text(encoding="utf-8"))["speakers"]
        paths = [dossier_dir / f"{s}.json" for s in speakers]
    else:
        paths = sorted(p for p in dossier_dir.glob("*.json") if p.name != "index.json")
    dossiers = [
        _dossier_from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in paths
    ]
    if not dossiers:
        print(f"no dossiers found in {dossier_dir}", file=sys.stderr)
        return 2
    cards = analyze_dossiers(dossiers, analysis.template(), backend)
    out_dir = Path(args.out) if args.out else dossier_dir / "cards"
    for card in cards:
        atomic_write(
            out_dir / f"{card.speaker}.json",
            json.dumps(card.to_dict(), indent=2, ensure_ascii=False),
        )
    summary = {"cards": [card.to_dict() for card in cards]}
    if args.film_title:
        probe = recognition_probe(cards, args.film_title)
        summary["recognition_probe"] = {
            "true_title": args.film_title,
            "matches": probe.matches,
            "recognition_rate": probe.recognition_rate,
        }
    atomic_write(
        out_dir / "summary.json", json.dumps(summary, indent=2, ensure_ascii=False)
    )
    print(f"wrote {len(cards)} cards to {out_dir}")
    return 0


def _cmd_vad(args) -> int:
    audio = load_wav(args.audio)
    cfg = VadConfig(
        frame_ms=args.frame_ms,
        hop_ms=args.hop_ms,
        threshold_db=args.threshold_db,
        min_speech_s=args.min_speech_s,
        min_gap_s=args.min_gap_s,
    )
    recording = args.recording or Path(args.audio).stem
    timeline = detect_speech(audio, cfg, recording_id=recording)
    annotation = Annotation(
        recording,
        tuple(SpeakerTurn(iv, VAD_SPEAKER_LABEL) for iv in timeline.intervals),
    )
    rttm = write_rttm(annotation)
    if args.out:
        atomic_write(Path(args.out), rttm)
        print(f"wrote {args.out} ({len(timeline.intervals)} speech regions)")
    else:
        sys.stdout.write(rttm)
    return 0


def _load_run_configs(args) -> list[PipelineConfig]:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    base_dir = Path(args.config).resolve().parent

    def resolve(path: str | None) -> str | None:
        if path is None:
            return None
        candidate = Path(path)
        return str(candidate if candidate.is_absolute() else base_dir / candidate)

    output_dir = args.output_dir or raw.get("output_dir", "out")
    collar = args.collar if args.collar is not None else raw.get("collar_s", 0.25)
    score_overlap = (
        False if args.no_overlap else bool(raw.get("score_overlap", True))
    )

    cluster_raw = dict(raw.get("cluster", {}))
    if args.k is not None:
        cluster = ClusterConfig.fixed_k(args.k)
    elif args.tau is not None:
        cluster = ClusterConfig.threshold(args.tau)
    elif cluster_raw.get("mode") == "fixed_k":
        cluster = ClusterConfig.fixed_k(int(cluster_raw["k"]))
    elif cluster_raw.get("mode") == "threshold":
        cluster = ClusterConfig.threshold(float(cluster_raw["tau"]))
    else:
        cluster = ClusterConfig.threshold(0.5)

    selection_raw = dict(raw.get("selection", {}))
    if args.min_speech is not None:
        selection_raw["min_speech_s"] = args.min_speech
    if args.fence_multiplier is not None:
        selection_raw["fence_multiplier"] = args.fence_multiplier
    selection = SelectionConfig(
        min_speech_s=float(selection_raw.get("min_speech_s", 2.0)),
        fence_multiplier=float(selection_raw.get("fence_multiplier", 1.5)),
    )

    vad_raw = raw.get("vad", {})
    vad = VadConfig(
        frame_ms=float(vad_raw.get("frame_ms", 30.0)),
        hop_ms=float(vad_raw.get("hop_ms", 10.0)),
        threshold_db=float(vad_raw.get("threshold_db", 12.0)),
        min_speech_s=float(vad_raw.get("min_speech_s", 0.3)),
        min_gap_s=float(vad_raw.get("min_gap_s", 0.2)),
    )

    analysis_raw = raw.get("analysis", {})
    analysis = AnalysisConfig(
        backend=analysis_raw.get("backend"),
        endpoint=analysis_raw.get("endpoint", ""),
        model_id=analysis_raw.get("model_id", "gpt-3.5-turbo-0125"),
        credential_env=analysis_raw.get("credential_env", "FILMVOICES_API_KEY"),
        film_title=analysis_raw.get("film_title"),
        max_concurrent=int(analysis_raw.get("max_concurrent", 2)),
        requests_per_s=float(analysis_raw.get("requests_per_s", 1.0)),
        template_path=resolve(analysis_raw.get("template_path")),
        stub_response_path=resolve(analysis_raw.get("stub_response_path")),
    )

    configs = []
    for entry in raw.get("recordings", []):
        configs.append(
            PipelineConfig(
                recording_id=entry["recording_id"],
                output_dir=output_dir,
                audio_path=resolve(entry.get("audio")),
                reference_rttm=resolve(entry.get("reference_rttm")),
                hypothesis_rttm=resolve(entry.get("hypothesis_rttm")),
                embeddings_path=resolve(entry.get("embeddings")),
                transcript_path=resolve(entry.get("transcript")),
                extract_cmd=raw.get("extract_cmd"),
                vad=vad,
                cluster=cluster,
                selection=selection,
                collar_s=float(collar),
                score_overlap=score_overlap,
                analysis=analysis,
                force=args.force,
            )
        )
    if not configs:
        raise SystemExit("config file lists no recordings")
    return configs


def _cmd_run(args) -> int:
    configs = _load_run_configs(args)
    for config in configs:
        config.validate()
    manifests = run_corpus(configs, workers=args.workers)
    emit_reports(manifests, configs[0].output_dir)
    failed = False
    for manifest in manifests:
        for stage in manifest.stages:
            marker = {"ok": "+", "skipped": "=", "failed": "!", "disabled": "-"}[
                stage.status
            ]
            print(
                f"[{marker}] {manifest.recording_id}/{stage.name}: {stage.status}"
                + (f" ({stage.reason})" if stage.reason else "")
            )
        failed = failed or manifest.failed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filmvoices",
        description="Film audio to per-character speech dossiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run all configured stages")
    p_run.add_argument("--config", required=True, help="run config JSON")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--collar", type=float, default=None)
    p_run.add_argument("--no-overlap", action="store_true")
    p_run.add_argument("--min-speech", type=float, default=None)
    p_run.add_argument("--fence-multiplier", type=float, default=None)
    p_run.add_argument("--k", type=int, default=None, help="fixed cluster count")
    p_run.add_argument("--tau", type=float, default=None, help="cluster distance threshold")
    p_run.add_argument("--force", action="store_true", help="ignore stage cache")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_score = sub.add_parser("score", help="score hypothesis RTTM against reference")
    p_score.add_argument("reference")
    p_score.add_argument("hypothesis")
    p_score.add_argument("--collar", type=float, default=0.25)
    p_score.add_argument("--no-overlap", action="store_true")
    p_score.add_argument("--out", default=None, help="write JSON report here")
    p_score.set_defaults(func=_cmd_score)

    p_select = sub.add_parser("select", help="pick main speakers from an RTTM")
    p_select.add_argument("rttm")
    p_select.add_argument("--recording", default=None)
    p_select.add_argument("--min-speech", type=float, default=2.0)
    p_select.add_argument("--fence-multiplier", type=float, default=1.5)
    p_select.add_argument("--out", default=None)
    p_select.set_defaults(func=_cmd_select)

    p_align = sub.add_parser("align", help="attach transcript segments to speakers")
    p_align.add_argument("rttm")
    p_align.add_argument("transcript")
    p_align.add_argument("--recording", default=None)
    p_align.add_argument("--out", default=None)
    p_align.set_defaults(func=_cmd_align)

    p_analyze = sub.add_parser("analyze", help="turn dossiers into character cards")
    p_analyze.add_argument("dossier_dir")
    p_analyze.add_argument("--backend", required=True, choices=["stub", "http"])
    p_analyze.add_argument("--endpoint", default=None)
    p_analyze.add_argument("--model", default="gpt-3.5-turbo-0125")
    p_analyze.add_argument("--credential-env", default="FILMVOICES_API_KEY")
    p_analyze.add_argument("--film-title", default=None)
    p_analyze.add_argument("--template", default=None, help="prompt template JSON")
    p_analyze.add_argument("--stub-response", default=None)
    p_analyze.add_argument("--out", default=None)
    p_analyze.set_defaults(func=_cmd_analyze)

    p_vad = sub.add_parser("vad", help="energy VAD over a mono WAV")
    p_vad.add_argument("audio")
    p_vad.add_argument("--recording", default=None)
    p_vad.add_argument("--frame-ms", type=float, default=30.0)
    p_vad.add_argument("--hop-ms", type=float, default=10.0)
    p_vad.add_argument("--threshold-db", type=float, default=12.0)
    p_vad.add_argument("--min-speech-s", type=float, default=0.3)
    p_vad.add_argument("--min-gap-s", type=float, default=0.2)
    p_vad.add_argument("--out", default=None)
    p_vad.set_defaults(func=_cmd_vad)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
