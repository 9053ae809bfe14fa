"""Functional-group tagging and role-salience ranking."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from rxncond.data import read_bundled
from rxncond.errors import DuplicateName, LibraryParseError, SmilesError, UnreadableSource
from rxncond.molgraph import Molecule
from rxncond.smarts import Pattern, match_pattern, parse_smarts

ROLES: tuple[str, ...] = ("electrophile", "nucleophile", "neutral")
BUNDLED_LIBRARY = "fg_library.tsv"


@dataclass(frozen=True)
class FGEntry:
    name: str
    smarts: str
    pattern: Pattern
    role: str
    activation: int


@dataclass(frozen=True)
class FGLibrary:
    """Ordered, uniquely named SMARTS motifs."""

    entries: tuple[FGEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, name: str) -> FGEntry:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def role_of(self, name: str) -> str:
        return self.get(name).role


def parse_library(text: str) -> FGLibrary:
    """Compile library text (``name<TAB>SMARTS<TAB>role<TAB>activation`` lines).

    Raises:
        LibraryParseError: For malformed lines or SMARTS that fail to compile.
        DuplicateName: When a name repeats.
    """
    entries: list[FGEntry] = []
    seen: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = raw.rstrip("\r\n").split("\t")
        if len(fields) != 4:
            raise LibraryParseError(f"expected 4 tab-separated fields, got {len(fields)}", line_no)
        name, smarts, role, activation_text = (f.strip() for f in fields)
        if not name:
            raise LibraryParseError("empty name", line_no)
        if role not in ROLES:
            raise LibraryParseError(f"unknown role {role!r}", line_no)
        try:
            activation = int(activation_text)
        except ValueError:
            raise LibraryParseError(f"activation {activation_text!r} is not an integer", line_no)
        if not 0 <= activation <= 3:
            raise LibraryParseError(f"activation {activation} outside 0..3", line_no)
        try:
            pattern = parse_smarts(smarts)
        except SmilesError as e:
            raise LibraryParseError(f"SMARTS {smarts!r}: {e}", line_no) from e
        if name in seen:
            raise DuplicateName(name)
        seen.add(name)
        entries.append(FGEntry(name, smarts, pattern, role, activation))
    return FGLibrary(tuple(entries))


def load_library(source: Path | None = None) -> FGLibrary:
    """Load a library file, or the bundled default when ``source`` is None."""
    if source is None:
        return parse_library(read_bundled(BUNDLED_LIBRARY))
    try:
        text = Path(source).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise UnreadableSource(f"Cannot read FG library {source}: {e}") from e
    return parse_library(text)


@dataclass(frozen=True, order=True)
class FGHit:
    """One functional-group embedding in one reactant."""

    molecule: int
    fg: str
    atoms: tuple[int, ...]


def tag_reactants(reactants: list[Molecule], lib: FGLibrary) -> list[FGHit]:
    """Every (library motif x reactant) embedding, ordered by molecule then library order."""
    hits: list[FGHit] = []
    for index, molecule in enumerate(reactants):
        for entry in lib.entries:
            for mapping in match_pattern(entry.pattern, molecule):
                atoms = tuple(sorted(mol_atom for _, mol_atom in mapping.pairs))
                hits.append(FGHit(molecule=index, fg=entry.name, atoms=atoms))
    return hits


@dataclass(frozen=True)
class SalienceWeights:
    w_act: float = 1.0
    w_role: dict[str, float] = field(
        default_factory=lambda: {"electrophile": 0.5, "nucleophile": 0.4, "neutral": 0.1}
    )
    w_freq: float = 0.2
    top_n: int = 4


@dataclass(frozen=True)
class RankedFG:
    name: str
    score: float
    hits: tuple[FGHit, ...]


@dataclass(frozen=True)
class MainFGList:
    """Salience-ranked functional groups; the first ``top_n`` form the Main FG set."""

    entries: tuple[RankedFG, ...] = ()
    top_n: int = 4

    @property
    def main(self) -> tuple[RankedFG, ...]:
        return self.entries[: self.top_n]

    @property
    def main_names(self) -> list[str]:
        return [e.name for e in self.main]


def rank_salience(
    hits: list[FGHit], lib: FGLibrary, weights: SalienceWeights | None = None
) -> MainFGList:
    """Rank tagged groups by w_act*activation + w_role[role] + w_freq*(share of hits)."""
    weights = weights or SalienceWeights()
    if not hits:
        return MainFGList(top_n=weights.top_n)
    grouped: dict[str, list[FGHit]] = defaultdict(list)
    for hit in hits:
        grouped[hit.fg].append(hit)
    total = len(hits)
    ranked: list[RankedFG] = []
    for name, group in grouped.items():
        entry = lib.get(name)
        score = (
            weights.w_act * entry.activation
            + weights.w_role.get(entry.role, 0.0)
            + weights.w_freq * (len(group) / total)
        )
        ranked.append(RankedFG(name=name, score=score, hits=tuple(sorted(group))))
    ranked.sort(key=lambda r: (-round(r.score, 12), r.name))
    return MainFGList(entries=tuple(ranked), top_n=weights.top_n)
