"""Provenance sidecars: every artifact-producing run records the request
that made it, so any output can be traced and re-run byte for byte."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__


def request_hash(request: dict) -> str:
    canonical = json.dumps(request, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_provenance(artifact_path: Path | str, operation: str, request: dict) -> Path:
    artifact_path = Path(artifact_path)
    record = {
        "operation": operation,
        "artifact": artifact_path.name,
        "request": request,
        "request_sha256": request_hash(request),
        "version": __version__,
    }
    out = artifact_path.with_name(artifact_path.name + ".provenance.json")
    out.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return out
