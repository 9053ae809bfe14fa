"""Run manifest: tool identity, config digest and per-file sha256."""

from __future__ import annotations

import hashlib
from pathlib import Path

from rxncond import __version__


def _sha256_of_file(path: Path) -> str:
    """Return the hex SHA-256 digest of a file."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while chunk := f.read(65536):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(
    *,
    files: list[Path],
    root: Path,
    config_digest: str,
    command: list[str] | None = None,
) -> dict:
    """Describe a run's outputs.

    Paths are stored relative to ``root``. Nothing time- or host-dependent is
    recorded, so identical runs produce identical manifests.
    """
    manifest: dict = {
        "manifest_version": 1,
        "tool": {"name": "rxncond", "version": __version__},
        "config_sha256": config_digest,
        "files": {
            str(Path(path).relative_to(root)): _sha256_of_file(Path(path))
            for path in sorted(files)
        },
    }
    if command is not None:
        manifest["command"] = list(command)
    return manifest
