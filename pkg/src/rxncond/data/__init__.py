"""Bundled tables and the fixture reaction corpus."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled data file."""
    return Path(str(resources.files(__package__) / name))


def read_bundled(name: str) -> str:
    return (resources.files(__package__) / name).read_text(encoding="utf-8")
