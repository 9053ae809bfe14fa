"""Reaction base: record ingest, indexes, evidence queries and signal features."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter, defaultdict
from collections.abc import Iterable
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import ValidationError as PydanticValidationError

from rxncond.balance import LeavingGroup, enumerate_byproducts, load_leaving_groups
from rxncond.config import FacetWeights
from rxncond.data import bundled_path
from rxncond.errors import (
    BalanceError,
    DuplicateId,
    EmptyBase,
    SmilesError,
    SnapshotError,
    UnreadableSource,
)
from rxncond.fingerprint import Fingerprint, combined_fingerprint, tanimoto
from rxncond.mcs import label_overlap, mcs
from rxncond.memory import write_json
from rxncond.models import SLOTS, ReactionRecord
from rxncond.molgraph import Molecule
from rxncond.smiles import parse_smiles
from rxncond.species import SpeciesDictionary, load_species
from rxncond.tagger import FGLibrary, load_library, rank_salience, tag_reactants
from rxncond.warning_policy import WarningPolicy, emit_warning

logger = logging.getLogger(__name__)

BUNDLED_CORPUS = "reactions.jsonl"
SNAPSHOT_FORMAT = "rxncond-base"
SNAPSHOT_VERSION = 1
SIMILARITY_MCS_BUDGET = 20_000

Side = Literal["reactant", "product"]


# --- profiles and facets ----------------------------------------------------


@dataclass(frozen=True)
class SideProfile:
    """Precomputed similarity inputs for one side of a reaction."""

    molecules: tuple[Molecule, ...]
    fg_names: frozenset[str]
    fp: Fingerprint

    @property
    def atom_total(self) -> int:
        return sum(len(m) for m in self.molecules)


def side_profile(molecules: list[Molecule], library: FGLibrary) -> SideProfile:
    hits = tag_reactants(molecules, library)
    return SideProfile(
        molecules=tuple(molecules),
        fg_names=frozenset(h.fg for h in hits),
        fp=combined_fingerprint(molecules),
    )


def fg_jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    """Jaccard index of two name sets; two empty sets are identical."""
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


@lru_cache(maxsize=65536)
def _mcs_size(a: Molecule, b: Molecule, budget: int) -> int:
    found = mcs(a, b, cap=min(len(a), len(b)), budget=budget)
    if found.approximate:
        logger.debug("similarity MCS budget exhausted for %s vs %s", a.smiles, b.smiles)
    return len(found)


def normalized_mcs(q: SideProfile, r: SideProfile, budget: int = SIMILARITY_MCS_BUDGET) -> float:
    """Sum over query molecules of their best MCS, over the larger side's atom count."""
    denominator = max(q.atom_total, r.atom_total)
    if denominator == 0 or not r.molecules:
        return 0.0
    matched = sum(max(_mcs_size(a, b, budget) for b in r.molecules) for a in q.molecules)
    return min(1.0, matched / denominator)


def _mcs_upper_bound(q: SideProfile, r: SideProfile) -> float:
    denominator = max(q.atom_total, r.atom_total)
    if denominator == 0 or not r.molecules:
        return 0.0
    bound = sum(
        max(min(label_overlap(a, b), len(a), len(b)) for b in r.molecules) for a in q.molecules
    )
    return min(1.0, bound / denominator)


@dataclass(frozen=True)
class Facets:
    """Per-record match facets against a query."""

    type_match: bool
    fg: float
    mcs: float
    fingerprint: float

    def combined(self, weights: FacetWeights) -> float:
        score = math.fsum(
            (weights.fg * self.fg, weights.mcs * self.mcs, weights.fingerprint * self.fingerprint)
        )
        return min(1.0, score)


@dataclass(frozen=True)
class EvidenceItem:
    record_id: str
    score: float
    facets: Facets


@dataclass(frozen=True)
class Evidence:
    """Cited records with their match facets, strongest first."""

    items: tuple[EvidenceItem, ...] = ()

    @property
    def record_ids(self) -> list[str]:
        return [item.record_id for item in self.items]

    def __len__(self) -> int:
        return len(self.items)

    def __bool__(self) -> bool:
        return bool(self.items)

    def get(self, record_id: str) -> EvidenceItem | None:
        for item in self.items:
            if item.record_id == record_id:
                return item
        return None

    def merge(self, other: Evidence) -> Evidence:
        """Union keeping the higher-scoring entry for each id."""
        best: dict[str, EvidenceItem] = {item.record_id: item for item in self.items}
        for item in other.items:
            current = best.get(item.record_id)
            if current is None or item.score > current.score:
                best[item.record_id] = item
        return Evidence(tuple(_ranked(best.values())))

    def top(self, k: int) -> Evidence:
        return Evidence(self.items[:k])


def _ranked(items: Iterable[EvidenceItem]) -> list[EvidenceItem]:
    return sorted(items, key=lambda item: (-round(item.score, 12), item.record_id))


@dataclass(frozen=True)
class SignalFeatures:
    """Co-occurrence signals drawn from cited records."""

    s_type: dict[str, float] = field(default_factory=dict)
    s_role: dict[str, float] = field(default_factory=dict)
    s_byprod: dict[str, int] = field(default_factory=dict)
    s_cond: dict[str, dict[str, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class Keywords:
    """Report terms that steer knowledge-base lookups."""

    reaction_type: str = "unknown"
    main_fgs: tuple[str, ...] = ()
    byproducts: tuple[str, ...] = ()


# --- indexed records --------------------------------------------------------


@dataclass(frozen=True)
class IndexedRecord:
    record: ReactionRecord
    reactants: SideProfile
    products: SideProfile
    main_fgs: tuple[str, ...]
    byproducts: tuple[str, ...]

    @property
    def id(self) -> str:
        return self.record.id

    def side(self, side: Side) -> SideProfile:
        return self.reactants if side == "reactant" else self.products


@dataclass(frozen=True)
class IngestReport:
    indexed: int
    skipped: int
    skipped_lines: tuple[tuple[int, str], ...] = ()

    def __str__(self) -> str:
        return f"{self.indexed} indexed, {self.skipped} skipped"


class ReactionBase:
    """Read-only indexed view over a set of reaction records."""

    def __init__(
        self,
        records: Iterable[IndexedRecord],
        library: FGLibrary,
        species: SpeciesDictionary,
        *,
        facet_weights: FacetWeights | None = None,
        mcs_budget: int = SIMILARITY_MCS_BUDGET,
    ) -> None:
        self.library = library
        self.species = species
        self.facet_weights = facet_weights or FacetWeights()
        self.mcs_budget = mcs_budget
        self._records: dict[str, IndexedRecord] = {}
        for indexed in sorted(records, key=lambda r: r.id):
            if indexed.id in self._records:
                raise DuplicateId(indexed.id)
            self._records[indexed.id] = indexed

        self.type_index: dict[str, tuple[str, ...]] = {}
        self.fg_index: dict[str, tuple[str, ...]] = {}
        types: dict[str, list[str]] = defaultdict(list)
        fgs: dict[str, list[str]] = defaultdict(list)
        for rid, indexed in self._records.items():
            types[indexed.record.reaction_type].append(rid)
            for name in sorted(indexed.reactants.fg_names):
                fgs[name].append(rid)
        self.type_index = {t: tuple(ids) for t, ids in sorted(types.items())}
        self.fg_index = {n: tuple(ids) for n, ids in sorted(fgs.items())}

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._records

    @property
    def ids(self) -> list[str]:
        return list(self._records)

    def get(self, record_id: str) -> IndexedRecord:
        return self._records[record_id]

    def records(self) -> list[ReactionRecord]:
        return [indexed.record for indexed in self._records.values()]

    def excluding(self, record_ids: Iterable[str]) -> ReactionBase:
        """A base without the given ids; indexes are rebuilt, profiles reused."""
        dropped = set(record_ids)
        return ReactionBase(
            (r for rid, r in self._records.items() if rid not in dropped),
            self.library,
            self.species,
            facet_weights=self.facet_weights,
            mcs_budget=self.mcs_budget,
        )

    # --- queries -------------------------------------------------------------

    def query_type(self, reaction_type: str) -> set[str]:
        """Ids of records whose type label equals ``reaction_type`` exactly."""
        return set(self.type_index.get(reaction_type, ()))

    def facets(
        self,
        record_id: str,
        reactants: SideProfile,
        products: SideProfile | None = None,
        reaction_type: str | None = None,
    ) -> Facets:
        """Facets of one record against a query, averaged over the sides present."""
        indexed = self._records[record_id]
        sides = [(reactants, indexed.reactants)]
        if products is not None and products.molecules:
            sides.append((products, indexed.products))
        fg = [fg_jaccard(q.fg_names, r.fg_names) for q, r in sides]
        mcs_scores = [normalized_mcs(q, r, self.mcs_budget) for q, r in sides]
        fps = [tanimoto(q.fp, r.fp) for q, r in sides]
        return Facets(
            type_match=reaction_type is not None and indexed.record.reaction_type == reaction_type,
            fg=math.fsum(fg) / len(sides),
            mcs=math.fsum(mcs_scores) / len(sides),
            fingerprint=math.fsum(fps) / len(sides),
        )

    def query_similar(self, mols: list[Molecule], side: Side, k: int) -> Evidence:
        """Top-``k`` records by weighted FG-Jaccard, normalized MCS and Tanimoto.

        Candidates are visited in order of an exact upper bound on the combined
        score, so MCS runs only for records that can still enter the top ``k``.
        Ties break by record id.
        """
        if k < 1:
            raise ValueError("k must be at least 1")
        if not mols or not self._records:
            return Evidence()
        query = side_profile(mols, self.library)
        w = self.facet_weights

        bounded: list[tuple[float, str, float, float]] = []
        for rid, indexed in self._records.items():
            target = indexed.side(side)
            fg = fg_jaccard(query.fg_names, target.fg_names)
            fp = tanimoto(query.fp, target.fp)
            upper = w.fg * fg + w.mcs * _mcs_upper_bound(query, target) + w.fingerprint * fp
            bounded.append((upper, rid, fg, fp))
        bounded.sort(key=lambda entry: (-entry[0], entry[1]))

        scored: list[EvidenceItem] = []
        for upper, rid, fg, fp in bounded:
            if len(scored) >= k:
                scored = _ranked(scored)[:k]
                if upper < scored[-1].score - 1e-12:
                    break
            target = self._records[rid].side(side)
            facets = Facets(
                type_match=False,
                fg=fg,
                mcs=normalized_mcs(query, target, self.mcs_budget),
                fingerprint=fp,
            )
            scored.append(EvidenceItem(rid, facets.combined(w), facets))
        return Evidence(tuple(_ranked(scored)[:k]))

    def classify_reaction_type(
        self, reactants: list[Molecule], products: list[Molecule], k: int = 5
    ) -> tuple[str, float, Evidence]:
        """Weighted neighbour vote over both similarity channels.

        Returns (type, confidence, evidence). Ties go to the lexicographically
        smaller label; when every neighbour scores zero each counts once.

        Raises:
            EmptyBase: If the base holds no records.
        """
        if not self._records:
            raise EmptyBase("cannot classify against an empty reaction base")
        evidence = self.query_similar(reactants, "reactant", k)
        if products:
            evidence = evidence.merge(self.query_similar(products, "product", k))
        if not evidence:
            return "unknown", 0.0, evidence
        votes = _type_votes(self, evidence)
        total = math.fsum(votes.values())
        label = min(votes, key=lambda t: (-round(votes[t], 12), t))
        return label, votes[label] / total, evidence

    def signal_features(self, keywords: Keywords, evidence: Evidence) -> SignalFeatures:
        """Type shares, role agreement, by-product support and slot shares among citations."""
        cited = [self._records[rid] for rid in evidence.record_ids if rid in self._records]
        if not cited:
            return SignalFeatures()
        votes = _type_votes(self, Evidence(tuple(i for i in evidence.items if i.record_id in self)))
        total = math.fsum(votes.values())
        s_type = {t: v / total for t, v in sorted(votes.items())}

        s_role = {
            name: sum(1 for r in cited if name in r.reactants.fg_names) / len(cited)
            for name in keywords.main_fgs
        }
        s_byprod = {
            name: sum(1 for r in cited if name in r.byproducts) for name in keywords.byproducts
        }
        s_cond: dict[str, dict[str, float]] = {}
        for slot in SLOTS:
            counts = Counter(getattr(r.record, slot) for r in cited)
            s_cond[slot] = {
                name: n / len(cited) for name, n in sorted(counts.items()) if name
            }
        return SignalFeatures(s_type=s_type, s_role=s_role, s_byprod=s_byprod, s_cond=s_cond)

    def cooccurring_alternatives(
        self, slot: str, reaction_type: str, main_fgs: Iterable[str] = ()
    ) -> list[tuple[str, int]]:
        """Species seen in ``slot`` for this type (or, failing that, any main FG).

        Returns (species, count) pairs ranked by count, then name.
        """
        if slot not in SLOTS:
            raise ValueError(f"unknown slot {slot!r}")
        ids: Iterable[str] = self.type_index.get(reaction_type, ())
        if not ids:
            pool: set[str] = set()
            for name in main_fgs:
                pool.update(self.fg_index.get(name, ()))
            ids = sorted(pool)
        counts = Counter(getattr(self._records[rid].record, slot) for rid in ids)
        counts.pop("", None)
        return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


def _type_votes(base: ReactionBase, evidence: Evidence) -> dict[str, float]:
    weighted = any(item.score > 0 for item in evidence.items)
    votes: dict[str, float] = defaultdict(float)
    for item in evidence.items:
        label = base.get(item.record_id).record.reaction_type
        votes[label] += item.score if weighted else 1.0
    return dict(votes)


# --- ingest -----------------------------------------------------------------


def index_record(
    record: ReactionRecord,
    library: FGLibrary,
    species: SpeciesDictionary,
    leaving_groups: tuple[LeavingGroup, ...],
) -> IndexedRecord:
    """Canonicalize slot names and compute the similarity profiles of one record."""
    canonical = record.model_copy(
        update={slot: species.canonical(getattr(record, slot)) for slot in SLOTS}
    )
    reactants = [parse_smiles(s) for s in record.reactants]
    products = [parse_smiles(s) for s in record.products]
    hits = tag_reactants(reactants, library)
    try:
        hypotheses = enumerate_byproducts(reactants, products, leaving_groups)
    except BalanceError:
        hypotheses = []
    byproducts = tuple(t.name for t in hypotheses[0].terms) if hypotheses else ()
    return IndexedRecord(
        record=canonical,
        reactants=side_profile(reactants, library),
        products=side_profile(products, library),
        main_fgs=tuple(rank_salience(hits, library).main_names),
        byproducts=byproducts,
    )


def _read_lines(source: Path | None) -> list[str]:
    path = bundled_path(BUNDLED_CORPUS) if source is None else Path(source)
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise UnreadableSource(f"Cannot read reaction base {path}: {e}") from e


def parse_record(line: str) -> ReactionRecord:
    """One record from a JSON line; raises ValueError on any schema problem."""
    try:
        data = json.loads(line)
    except json.JSONDecodeError as e:
        raise ValueError(f"invalid JSON: {e.msg}") from e
    if not isinstance(data, dict):
        raise ValueError("record must be a JSON object")
    try:
        return ReactionRecord(**data)
    except PydanticValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or "record"
        raise ValueError(f"{loc}: {first['msg']}") from e


def ingest(
    source: Path | Iterable[str] | None = None,
    *,
    library: FGLibrary | None = None,
    species: SpeciesDictionary | None = None,
    leaving_groups: tuple[LeavingGroup, ...] | None = None,
    facet_weights: FacetWeights | None = None,
    mcs_budget: int = SIMILARITY_MCS_BUDGET,
    policy: WarningPolicy | None = None,
) -> tuple[ReactionBase, IngestReport]:
    """Build a base from line-delimited records (a path, raw lines, or the bundled corpus).

    Malformed records are skipped under W02 and counted.

    Raises:
        UnreadableSource: If the file cannot be read.
        DuplicateId: If two well-formed records share an id.
    """
    library = library or load_library()
    species = species or load_species()
    leaving_groups = leaving_groups if leaving_groups is not None else load_leaving_groups()
    lines = _read_lines(source) if source is None or isinstance(source, Path) else list(source)

    indexed: list[IndexedRecord] = []
    seen: set[str] = set()
    skipped: list[tuple[int, str]] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = parse_record(line)
            entry = index_record(record, library, species, leaving_groups)
        except (ValueError, SmilesError) as e:
            skipped.append((line_no, str(e)))
            emit_warning("W02", f"line {line_no}: {e}", policy=policy)
            continue
        if record.id in seen:
            raise DuplicateId(record.id)
        seen.add(record.id)
        indexed.append(entry)

    logger.debug("ingested %d records, skipped %d", len(indexed), len(skipped))
    base = ReactionBase(
        indexed, library, species, facet_weights=facet_weights, mcs_budget=mcs_budget
    )
    return base, IngestReport(len(indexed), len(skipped), tuple(skipped))


# --- snapshots --------------------------------------------------------------


def snapshot_document(base: ReactionBase) -> dict:
    return {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "records": [r.model_dump(mode="json") for r in base.records()],
    }


def save_snapshot(base: ReactionBase, path: Path) -> None:
    write_json(path, snapshot_document(base))


def load_snapshot(
    path: Path,
    *,
    library: FGLibrary | None = None,
    species: SpeciesDictionary | None = None,
    leaving_groups: tuple[LeavingGroup, ...] | None = None,
    facet_weights: FacetWeights | None = None,
    mcs_budget: int = SIMILARITY_MCS_BUDGET,
) -> ReactionBase:
    """Rebuild a base from a snapshot file.

    Raises:
        SnapshotError: If the header names another format or version.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise UnreadableSource(f"Cannot read snapshot {path}: {e}") from e
    if not isinstance(data, dict):
        raise SnapshotError("snapshot must be a JSON object")
    header = (data.get("format"), data.get("version"))
    if header != (SNAPSHOT_FORMAT, SNAPSHOT_VERSION):
        raise SnapshotError(
            f"unsupported snapshot header {header!r}, expected "
            f"({SNAPSHOT_FORMAT!r}, {SNAPSHOT_VERSION})"
        )
    lines = [json.dumps(record, sort_keys=True) for record in data.get("records", [])]
    base, _ = ingest(
        lines,
        library=library,
        species=species,
        leaving_groups=leaving_groups,
        facet_weights=facet_weights,
        mcs_budget=mcs_budget,
    )
    return base
