"""Run manifests: what went in, what came out, and the hashes to prove it."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Optional

MANIFEST_SCHEMA_VERSION = 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    tool_version: str
    command: str
    created_utc: str
    seed: Optional[int] = None
    config_path: Optional[str] = None
    config_sha256: Optional[str] = None
    inputs: dict = field(default_factory=dict)  # path -> sha256
    outputs: dict = field(default_factory=dict)  # path -> sha256


def build_manifest(
    command: str,
    inputs: list,
    outputs: list,
    seed: Optional[int] = None,
    config_path=None,
) -> RunManifest:
    from . import __version__

    return RunManifest(
        tool_version=__version__,
        command=command,
        created_utc=datetime.now(timezone.utc).isoformat(),
        seed=seed,
        config_path=str(config_path) if config_path else None,
        config_sha256=sha256_file(config_path) if config_path else None,
        inputs={str(p): sha256_file(p) for p in inputs},
        outputs={str(p): sha256_file(p) for p in outputs},
    )


def write_manifest(manifest: RunManifest, path) -> None:
    data = {"schema_version": MANIFEST_SCHEMA_VERSION, **asdict(manifest)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
