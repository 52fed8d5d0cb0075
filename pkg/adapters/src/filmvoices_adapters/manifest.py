"""Adapter manifests: every emitted file gets a sidecar recording its origin."""

from __future__ import annotations

import json
from pathlib import Path


def write_manifest(
    output_path,
    model_name: str,
    model_version: str,
    recording_id: str,
    parameters: dict,
) -> Path:
    output_path = Path(output_path)
    manifest_path = output_path.with_name(output_path.name + ".manifest.json")
    manifest_path.write_text(
        json.dumps(
            {
                "model": model_name,
                "model_version": model_version,
                "recording_id": recording_id,
                "output": str(output_path),
                "parameters": parameters,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return manifest_path
