"""Species dictionary: canonical names, synonyms and role tags."""

from __future__ import annotations

from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from rxncond.data import read_bundled
from rxncond.errors import LibraryError, UnreadableSource
from rxncond.models import SLOTS, ConditionConfig

BUNDLED_SPECIES = "species.yaml"


class SpeciesEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    synonyms: list[str] = Field(default_factory=list)
    roles: list[str] = Field(default_factory=list)
    smiles: str | None = None


class SpeciesFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    species: list[SpeciesEntry]


class SpeciesDictionary:
    """Lookup table from any synonym (case-insensitive) to a canonical entry."""

    def __init__(self, entries: list[SpeciesEntry]) -> None:
        self._entries: dict[str, SpeciesEntry] = {}
        self._lookup: dict[str, str] = {}
        for entry in entries:
            if entry.name in self._entries:
                raise LibraryError(f"Duplicate species name: {entry.name!r}")
            self._entries[entry.name] = entry
        for entry in entries:
            for alias in [entry.name, *entry.synonyms]:
                key = alias.strip().lower()
                owner = self._lookup.get(key)
                if owner is not None and owner != entry.name:
                    raise LibraryError(
                        f"Synonym {alias!r} claimed by both {owner!r} and {entry.name!r}"
                    )
                self._lookup[key] = entry.name

    def __contains__(self, name: str) -> bool:
        return name.strip().lower() in self._lookup

    def __len__(self) -> int:
        return len(self._entries)

    def canonical(self, name: str) -> str:
        """Canonical name for ``name``; unknown names come back stripped, unchanged."""
        stripped = name.strip()
        if not stripped:
            return ""
        return self._lookup.get(stripped.lower(), stripped)

    def entry(self, name: str) -> SpeciesEntry | None:
        return self._entries.get(self.canonical(name))

    def roles(self, name: str) -> frozenset[str]:
        entry = self.entry(name)
        return frozenset(entry.roles) if entry is not None else frozenset()

    def has_role(self, name: str, role: str) -> bool:
        return role in self.roles(name)

    def smiles(self, name: str) -> str | None:
        entry = self.entry(name)
        return entry.smiles if entry is not None else None

    def canonical_config(self, config: ConditionConfig) -> ConditionConfig:
        return ConditionConfig(**{slot: self.canonical(getattr(config, slot)) for slot in SLOTS})


def parse_species(text: str) -> SpeciesDictionary:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise LibraryError(f"Invalid YAML in species dictionary: {e}") from e
    if not isinstance(data, dict):
        raise LibraryError("Species dictionary top-level YAML value must be a mapping")
    try:
        parsed = SpeciesFile(**data)
    except PydanticValidationError as e:
        raise LibraryError(f"Species dictionary schema validation failed:\n{e}") from e
    return SpeciesDictionary(parsed.species)


def load_species(source: Path | None = None) -> SpeciesDictionary:
    """Load a species dictionary file, or the bundled one when ``source`` is None.

    Raises:
        UnreadableSource: When the file cannot be read.
        LibraryError: On YAML or schema errors, or conflicting names.
    """
    if source is None:
        return parse_species(read_bundled(BUNDLED_SPECIES))
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as e:
        raise UnreadableSource(f"Cannot read species dictionary: {e}") from e
    return parse_species(text)
