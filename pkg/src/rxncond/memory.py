"""Per-run memory store: canonical JSON documents written atomically."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from rxncond.manifest import build_manifest

MANIFEST_NAME = "manifest.json"


def canonical_json(data: Any) -> str:
    """Sorted keys, two-space indent, trailing newline."""
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json")
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_text_atomic(path: Path, text: str) -> None:
    """Write through a sibling temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def write_json(path: Path, data: Any) -> None:
    write_text_atomic(path, canonical_json(data))


class RunStore:
    """A directory of named documents plus a manifest of their digests.

    Documents are held in memory until ``flush``; with no directory the store only
    keeps them in memory, which the pipeline uses when nothing is persisted.
    """

    def __init__(self, directory: Path | None = None) -> None:
        self.directory = Path(directory) if directory is not None else None
        self.documents: dict[str, str] = {}

    def put(self, name: str, data: Any) -> None:
        self.documents[name] = canonical_json(data)

    def get(self, name: str) -> Any:
        return json.loads(self.documents[name])

    def __contains__(self, name: str) -> bool:
        return name in self.documents

    def flush(self, *, config_digest: str, command: list[str] | None = None) -> list[Path]:
        """Write every document, then the manifest; returns the written paths."""
        if self.directory is None:
            return []
        written: list[Path] = []
        for name in sorted(self.documents):
            path = self.directory / name
            write_text_atomic(path, self.documents[name])
            written.append(path)
        manifest = build_manifest(
            files=written, root=self.directory, config_digest=config_digest, command=command
        )
        manifest_path = self.directory / MANIFEST_NAME
        write_json(manifest_path, manifest)
        return [*written, manifest_path]
