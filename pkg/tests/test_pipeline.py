import json
from pathlib import Path

import pytest

from filmvoices.cli import main
from filmvoices.cluster import ClusterConfig
from filmvoices.core import Annotation, SpeakerTurn, TimeInterval
from filmvoices.ioformats import parse_rttm, write_rttm
from filmvoices.pipeline import (
    AnalysisConfig,
    PipelineConfig,
    emit_reports,
    run,
    run_corpus,
)


def film_config(fixture, **overrides) -> PipelineConfig:
    base = dict(
        recording_id=fixture["recording_id"],
        output_dir=str(fixture["output_dir"]),
        reference_rttm=str(fixture["reference"]),
        embeddings_path=str(fixture["embeddings"]),
        transcript_path=str(fixture["transcript"]),
        cluster=ClusterConfig.fixed_k(3),
        analysis=AnalysisConfig(backend="stub", film_title="Testfilm"),
    )
    base.update(overrides)
    return PipelineConfig(**base)


class TestConfigValidation:
    def test_two_diarization_sources_rejected(self, tmp_path):
        rttm = tmp_path / "h.rttm"
        rttm.write_text("", encoding="utf-8")
        emb = tmp_path / "e.jsonl"
        emb.write_text("", encoding="utf-8")
        config = PipelineConfig(
            recording_id="r",
            output_dir=str(tmp_path),
            hypothesis_rttm=str(rttm),
            embeddings_path=str(emb),
        )
        with pytest.raises(ValueError, match="not both"):
            config.validate()

    def test_no_source_rejected(self, tmp_path):
        config = PipelineConfig(recording_id="r", output_dir=str(tmp_path))
        with pytest.raises(ValueError, match="no diarization source"):
            config.validate()

    def test_missing_file_rejected(self, tmp_path):
        config = PipelineConfig(
            recording_id="r",
            output_dir=str(tmp_path),
            hypothesis_rttm=str(tmp_path / "absent.rttm"),
        )
        with pytest.raises(FileNotFoundError):
            config.validate()

    def test_source_labels(self, tmp_path):
        rttm = tmp_path / "h.rttm"
        rttm.write_text("", encoding="utf-8")
        assert (
            PipelineConfig(
                recording_id="r", output_dir=str(tmp_path), hypothesis_rttm=str(rttm)
            ).validate()
            == "external"
        )


class TestScoringOnlyRun:
    def test_runs_single_stage(self, tmp_path):
        ref = Annotation("rec", (SpeakerTurn(TimeInterval(0, 10), "A"),))
        hyp = Annotation(
            "rec",
            (
                SpeakerTurn(TimeInterval(0, 8), "X"),
                SpeakerTurn(TimeInterval(8, 12), "Y"),
            ),
        )
        ref_path = tmp_path / "ref.rttm"
        hyp_path = tmp_path / "hyp.rttm"
        ref_path.write_text(write_rttm(ref), encoding="utf-8")
        hyp_path.write_text(write_rttm(hyp), encoding="utf-8")
        config = PipelineConfig(
            recording_id="rec",
            output_dir=str(tmp_path / "out"),
            reference_rttm=str(ref_path),
            hypothesis_rttm=str(hyp_path),
            collar_s=0.0,
        )
        manifest = run(config)
        by_status = {s.name: s.status for s in manifest.stages}
        assert by_status["score"] == "ok"
        assert by_status["align"] == "disabled"
        assert not manifest.failed
        der = json.loads((tmp_path / "out" / "rec.der.json").read_text())
        assert der["der"] == pytest.approx(0.4, abs=1e-9)


class TestEndToEnd:
    def test_full_pipeline(self, synthetic_film):
        manifest = run(film_config(synthetic_film))
        statuses = {s.name: s.status for s in manifest.stages}
        assert statuses == {
            "cluster": "ok",
            "score": "ok",
            "align": "ok",
            "select": "ok",
            "dossiers": "ok",
            "analyze": "ok",
        }
        out = synthetic_film["output_dir"]

        # Clustering recovered the three speakers, so DER is ~0.
        der = json.loads((out / "film1.der.json").read_text())
        assert der["der"] == pytest.approx(0.0, abs=1e-9)
        assert set(der["mapping"].values()) == {"anna", "bruno", "carla"}

        histogram = json.loads((out / "film1.histogram.json").read_text())
        assert histogram["fence"] > 0
        assert 1 <= len(histogram["selected"]) <= 3

        dossier_index = json.loads(
            (out / "film1.dossiers" / "index.json").read_text()
        )
        assert 1 <= len(dossier_index["speakers"]) <= 3

        summary = json.loads((out / "film1.cards_summary.json").read_text())
        assert summary["cards"]
        for card in summary["cards"]:
            assert not card["parse_failed"]
            assert card["traits"] and card["goals"] and card["interactions"]
        assert summary["recognition_probe"]["recognition_rate"] == 0.0

        manifest_file = json.loads((out / "film1.manifest.json").read_text())
        assert manifest_file["tool_version"]
        produced = {p for s in manifest_file["stages"] for p in s["outputs"]}
        for path in produced:
            assert Path(path).exists()

    def test_second_run_skips_everything(self, synthetic_film):
        run(film_config(synthetic_film))
        second = run(film_config(synthetic_film))
        statuses = {s.name: s.status for s in second.stages}
        assert set(statuses.values()) == {"skipped"}
        assert all(
            s.reason == "inputs unchanged" for s in second.stages
        )

    def test_force_reruns(self, synthetic_film):
        run(film_config(synthetic_film))
        forced = run(film_config(synthetic_film, force=True))
        statuses = {s.name: s.status for s in forced.stages}
        assert set(statuses.values()) == {"ok"}

    def test_changed_input_invalidates_cache(self, synthetic_film):
        run(film_config(synthetic_film))
        transcript = synthetic_film["transcript"]
        doc = json.loads(transcript.read_text(encoding="utf-8"))
        doc["segments"][0]["text"] = "Etwas ganz anderes."
        transcript.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
        manifest = run(film_config(synthetic_film))
        statuses = {s.name: s.status for s in manifest.stages}
        assert statuses["align"] == "ok"  # transcript changed
        assert statuses["cluster"] == "skipped"  # embeddings unchanged
        assert statuses["select"] == "skipped"

    def test_idempotent_artifacts(self, synthetic_film):
        run(film_config(synthetic_film))
        out = synthetic_film["output_dir"]
        first = {
            p.name: p.read_bytes() for p in out.rglob("*.json") if "manifest" not in p.name
        }
        run(film_config(synthetic_film, force=True))
        second = {
            p.name: p.read_bytes() for p in out.rglob("*.json") if "manifest" not in p.name
        }
        assert first == second

    def test_no_partial_artifacts_left_behind(self, synthetic_film):
        run(film_config(synthetic_film))
        leftovers = list(synthetic_film["output_dir"].rglob("*.tmp-*"))
        assert leftovers == []

    def test_failed_stage_halts_dependents(self, synthetic_film):
        bad = synthetic_film["embeddings"]
        bad.write_text('{"start": 0, "end": 1, "vector": [1.0]}\n', encoding="utf-8")
        manifest = run(film_config(synthetic_film))
        statuses = {s.name: s.status for s in manifest.stages}
        assert statuses["cluster"] == "failed"
        assert statuses["score"] == "skipped"
        assert statuses["align"] == "skipped"
        assert manifest.failed
        # Manifest written even on partial failure.
        assert (synthetic_film["output_dir"] / "film1.manifest.json").exists()

    def test_emit_reports(self, synthetic_film):
        manifest = run(film_config(synthetic_film))
        written = emit_reports([manifest], str(synthetic_film["output_dir"]))
        names = {Path(p).name for p in written}
        assert "der_report.csv" in names
        assert "film1.histogram.csv" in names
        assert "cards_summary.csv" in names
        der_csv = (synthetic_film["output_dir"] / "der_report.csv").read_text()
        assert "TIME_WEIGHTED" in der_csv and "MEAN" in der_csv

    def test_vad_only_run_disables_speaker_stages(self, tmp_path):
        import numpy as np
        from scipy.io import wavfile

        sr = 16000
        tone = np.sin(2 * np.pi * 300 * np.arange(sr) / sr)
        samples = np.concatenate([np.zeros(sr), tone, np.zeros(sr)])
        wav = tmp_path / "audio.wav"
        wavfile.write(wav, sr, (samples * 20000).astype(np.int16))
        config = PipelineConfig(
            recording_id="clip",
            output_dir=str(tmp_path / "out"),
            audio_path=str(wav),
        )
        manifest = run(config)
        statuses = {s.name: s.status for s in manifest.stages}
        assert statuses["vad"] == "ok"
        assert statuses["align"] == "disabled"
        assert statuses["analyze"] == "disabled"
        parsed = parse_rttm((tmp_path / "out" / "clip.vad.rttm").read_text())
        assert parsed["clip"].speakers == ["speech"]


class TestRunCorpus:
    def test_parallel_matches_serial(self, tmp_path):
        configs = []
        for rec in ("one", "two"):
            ref = Annotation(rec, (SpeakerTurn(TimeInterval(0, 5), "A"),))
            hyp = Annotation(rec, (SpeakerTurn(TimeInterval(0, 4), "B"),))
            ref_path = tmp_path / f"{rec}.ref.rttm"
            hyp_path = tmp_path / f"{rec}.hyp.rttm"
            ref_path.write_text(write_rttm(ref), encoding="utf-8")
            hyp_path.write_text(write_rttm(hyp), encoding="utf-8")
            configs.append(
                PipelineConfig(
                    recording_id=rec,
                    output_dir=str(tmp_path / "out"),
                    reference_rttm=str(ref_path),
                    hypothesis_rttm=str(hyp_path),
                    collar_s=0.0,
                )
            )
        manifests = run_corpus(configs, workers=2)
        assert [m.recording_id for m in manifests] == ["one", "two"]
        assert not any(m.failed for m in manifests)


class TestCli:
    def test_score_command(self, tmp_path, capsys):
        ref = Annotation("rec", (SpeakerTurn(TimeInterval(0, 10), "A"),))
        hyp = Annotation(
            "rec",
            (
                SpeakerTurn(TimeInterval(0, 8), "X"),
                SpeakerTurn(TimeInterval(8, 12), "Y"),
            ),
        )
        ref_path = tmp_path / "ref.rttm"
        hyp_path = tmp_path / "hyp.rttm"
        ref_path.write_text(write_rttm(ref), encoding="utf-8")
        hyp_path.write_text(write_rttm(hyp), encoding="utf-8")
        out = tmp_path / "der.json"
        code = main(
            ["score", str(ref_path), str(hyp_path), "--collar", "0", "--out", str(out)]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "TIME_WEIGHTED" in printed
        assert json.loads(out.read_text())["der_time_weighted"] == pytest.approx(0.4)

    def test_select_command(self, tmp_path, capsys):
        turns = []
        cursor = 0.0
        for speaker, count in (("a", 3), ("b", 4), ("c", 5), ("d", 20)):
            for _ in range(count):
                turns.append(SpeakerTurn(TimeInterval(cursor, cursor + 3.0), speaker))
                cursor += 4.0
        rttm = tmp_path / "hyp.rttm"
        rttm.write_text(write_rttm(Annotation("rec", tuple(turns))), encoding="utf-8")
        code = main(["select", str(rttm)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "fence = 16.250" in printed
        assert "d\t20" in printed

    def test_align_command(self, tmp_path, capsys):
        rttm = tmp_path / "hyp.rttm"
        rttm.write_text(
            write_rttm(Annotation("rec", (SpeakerTurn(TimeInterval(0, 5), "A"),))),
            encoding="utf-8",
        )
        transcript = tmp_path / "t.json"
        transcript.write_text(
            '{"recording": "rec", "segments": [{"start": 1, "end": 2, "text": "hallo"}]}',
            encoding="utf-8",
        )
        code = main(["align", str(rttm), str(transcript)])
        assert code == 0
        document = json.loads(capsys.readouterr().out)
        assert document["segments"][0]["speaker"] == "A"

    def test_vad_command(self, tmp_path, capsys):
        import numpy as np
        from scipy.io import wavfile

        sr = 16000
        tone = np.sin(2 * np.pi * 300 * np.arange(sr) / sr)
        wav = tmp_path / "a.wav"
        wavfile.write(
            wav,
            sr,
            (np.concatenate([np.zeros(sr), tone, np.zeros(sr)]) * 20000).astype(
                np.int16
            ),
        )
        code = main(["vad", str(wav)])
        assert code == 0
        assert "SPEAKER a 1 " in capsys.readouterr().out

    def test_run_command_and_exit_codes(self, synthetic_film, tmp_path, capsys):
        config = {
            "output_dir": str(synthetic_film["output_dir"]),
            "collar_s": 0.25,
            "cluster": {"mode": "fixed_k", "k": 3},
            "analysis": {"backend": "stub", "film_title": "Testfilm"},
            "recordings": [
                {
                    "recording_id": "film1",
                    "reference_rttm": str(synthetic_film["reference"]),
                    "embeddings": str(synthetic_film["embeddings"]),
                    "transcript": str(synthetic_film["transcript"]),
                }
            ],
        }
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps(config), encoding="utf-8")
        assert main(["run", "--config", str(config_path)]) == 0
        assert (synthetic_film["output_dir"] / "der_report.csv").exists()

        # Break the embeddings: the run must now exit nonzero.
        synthetic_film["embeddings"].write_text("not json\n", encoding="utf-8")
        assert main(["run", "--config", str(config_path), "--force"]) == 1

    def test_analyze_command(self, tmp_path, capsys):
        dossier_dir = tmp_path / "dossiers"
        dossier_dir.mkdir()
        (dossier_dir / "duke.json").write_text(
            json.dumps(
                {
                    "speaker": "duke",
                    "utterances": [{"start": 0, "end": 2, "text": "Kopf hoch."}],
                    "total_speech_s": 2.0,
                    "segment_count_over_min": 0,
                }
            ),
            encoding="utf-8",
        )
        code = main(
            ["analyze", str(dossier_dir), "--backend", "stub", "--film-title", "X"]
        )
        assert code == 0
        summary = json.loads((dossier_dir / "cards" / "summary.json").read_text())
        assert summary["cards"][0]["speaker"] == "duke"
