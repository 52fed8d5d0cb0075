import json
import random

import numpy as np
import pytest

from filmvoices.core import Annotation, SpeakerTurn, TimeInterval
from filmvoices.ioformats import write_rttm


@pytest.fixture
def synthetic_film(tmp_path):
    """A 3-speaker synthetic 'film': embeddings + reference RTTM + transcript.

    Speaker turn counts (8 / 5 / 3 long speeches) and per-turn embeddings
    around three fixed orthogonal directions in D=8, tight enough that
    clustering recovers the ground truth exactly.
    """
    rng = random.Random(4242)
    np_rng = np.random.default_rng(4242)
    d = 8
    centers = {"anna": np.eye(d)[0], "bruno": np.eye(d)[1], "carla": np.eye(d)[2]}
    plan = [("anna", 8, 3.0), ("bruno", 5, 2.5), ("carla", 3, 2.2)]

    turns = []
    cursor = 0.0
    schedule = []
    for speaker, count, dur in plan:
        schedule += [(speaker, dur)] * count
    rng.shuffle(schedule)
    for speaker, dur in schedule:
        turns.append((speaker, cursor, cursor + dur))
        cursor += dur + 0.8

    annotation = Annotation(
        "film1",
        tuple(
            SpeakerTurn(TimeInterval(start, end), speaker)
            for speaker, start, end in turns
        ),
    )
    reference = tmp_path / "reference.rttm"
    reference.write_text(write_rttm(annotation), encoding="utf-8")

    embedding_lines = []
    for speaker, start, end in turns:
        vector = centers[speaker] + 0.01 * np_rng.standard_normal(d)
        embedding_lines.append(
            json.dumps({"start": start, "end": end, "vector": vector.tolist()})
        )
    embeddings = tmp_path / "embeddings.jsonl"
    embeddings.write_text("\n".join(embedding_lines) + "\n", encoding="utf-8")

    phrases = [
        "Kopf hoch, mein Junge.",
        "Das werden wir noch sehen.",
        "Ich verlange eine Antwort.",
        "So war das nicht gemeint.",
        "Wir fahren morgen in die Stadt.",
        "Niemand verlässt diesen Raum.",
    ]
    segments = []
    for index, (speaker, start, end) in enumerate(turns):
        segments.append(
            {
                "start": round(start + 0.1, 3),
                "end": round(end - 0.1, 3),
                "text": phrases[index % len(phrases)],
            }
        )
    transcript = tmp_path / "transcript.json"
    transcript.write_text(
        json.dumps({"recording": "film1", "segments": segments}, ensure_ascii=False),
        encoding="utf-8",
    )

    return {
        "recording_id": "film1",
        "annotation": annotation,
        "reference": reference,
        "embeddings": embeddings,
        "transcript": transcript,
        "turns": turns,
        "output_dir": tmp_path / "out",
    }
