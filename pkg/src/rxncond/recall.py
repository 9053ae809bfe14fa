"""Multi-channel recall: type, reactant and product channels into a capped pool."""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field
from typing import Literal

from rxncond.balance import run_hard_checks
from rxncond.config import PipelineConfig
from rxncond.knowbase import Evidence, ReactionBase
from rxncond.models import SLOTS, ConditionConfig, Reaction, ReactionReport
from rxncond.molgraph import Molecule
from rxncond.species import SpeciesDictionary

DEFAULT_POOL_CAP = 5000
CHANNELS: tuple[str, ...] = ("type", "reactant", "product")

Origin = Literal["matched", "similar"]
Feasibility = Callable[[ConditionConfig], bool]


@dataclass(frozen=True)
class Candidate:
    """One pool entry with its admission trail."""

    config: ConditionConfig
    origin: Origin
    provenance: tuple[str, ...]
    priority: float
    channels: frozenset[str] = frozenset()
    parent: str | None = None
    replaced: tuple[str, ...] = ()

    @property
    def canonical_id(self) -> str:
        return self.config.canonical_id


@dataclass(frozen=True)
class CandidatePool:
    candidates: tuple[Candidate, ...] = ()
    cap: int = DEFAULT_POOL_CAP

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self) -> Iterator[Candidate]:
        return iter(self.candidates)

    @property
    def ids(self) -> list[str]:
        return [c.canonical_id for c in self.candidates]

    def get(self, canonical_id: str) -> Candidate:
        for c in self.candidates:
            if c.canonical_id == canonical_id:
                return c
        raise KeyError(canonical_id)

    def to_document(self) -> dict:
        return {
            "cap": self.cap,
            "size": len(self.candidates),
            "candidates": [
                {
                    "config": c.config.model_dump(),
                    "origin": c.origin,
                    "provenance": list(c.provenance),
                    "priority": round(c.priority, 12),
                    "channels": sorted(c.channels),
                    "parent": c.parent,
                    "replaced": list(c.replaced),
                }
                for c in self.candidates
            ],
        }


@dataclass(frozen=True)
class ChannelSets:
    type_ids: frozenset[str]
    reactant: Evidence
    product: Evidence


@dataclass(frozen=True)
class MatchedHit:
    record_id: str
    channels: frozenset[str]
    score: float


def recall_channels(
    base: ReactionBase,
    reaction_type: str,
    reactants: list[Molecule],
    products: list[Molecule],
    k: int,
) -> ChannelSets:
    """Run the three recall channels; an empty product list leaves that channel empty."""
    return ChannelSets(
        type_ids=frozenset(base.query_type(reaction_type)),
        reactant=base.query_similar(reactants, "reactant", k) if reactants else Evidence(),
        product=base.query_similar(products, "product", k) if products else Evidence(),
    )


def merge_matched(
    s_t: Iterable[str], s_r: Evidence | Iterable[str], s_p: Evidence | Iterable[str]
) -> dict[str, MatchedHit]:
    """Deduplicated union of the channel sets, keeping which channels hit each id."""
    flags: dict[str, set[str]] = {}
    scores: dict[str, float] = {}
    for channel, members in zip(CHANNELS, (s_t, s_r, s_p)):
        if isinstance(members, Evidence):
            for item in members.items:
                flags.setdefault(item.record_id, set()).add(channel)
                scores[item.record_id] = max(scores.get(item.record_id, 0.0), item.score)
        else:
            for rid in members:
                flags.setdefault(rid, set()).add(channel)
                scores.setdefault(rid, 0.0)
    return {
        rid: MatchedHit(rid, frozenset(flags[rid]), scores[rid]) for rid in sorted(flags)
    }


def hard_check_filter(
    reaction: Reaction, report: ReactionReport, species: SpeciesDictionary
) -> Feasibility:
    """Predicate passing configs that clear every hard check for ``reaction``."""
    verdicts: dict[str, bool] = {}

    def feasible(config: ConditionConfig) -> bool:
        key = config.canonical_id
        if key not in verdicts:
            verdicts[key] = run_hard_checks(reaction, config, report, species).passed
        return verdicts[key]

    return feasible


def feasibility_filter(
    matched: dict[str, MatchedHit],
    base: ReactionBase,
    feasible: Feasibility | None,
) -> dict[str, MatchedHit]:
    """Drop ids whose recorded config fails the hard checks; ``None`` disables the filter."""
    if feasible is None:
        return dict(matched)
    return {
        rid: hit for rid, hit in matched.items() if feasible(base.get(rid).record.condition)
    }


def matched_candidates(matched: dict[str, MatchedHit], base: ReactionBase) -> list[Candidate]:
    """Group matched records by canonical config into candidates."""
    grouped: dict[str, list[MatchedHit]] = {}
    configs: dict[str, ConditionConfig] = {}
    for rid, hit in matched.items():
        config = base.get(rid).record.condition
        grouped.setdefault(config.canonical_id, []).append(hit)
        configs[config.canonical_id] = config
    candidates = []
    for key, hits in grouped.items():
        candidates.append(
            Candidate(
                config=configs[key],
                origin="matched",
                provenance=tuple(sorted(h.record_id for h in hits)),
                priority=max(h.score for h in hits),
                channels=frozenset().union(*(h.channels for h in hits)),
            )
        )
    return candidates


def slot_alternatives(
    base: ReactionBase, reaction_type: str, main_fgs: Iterable[str], per_slot: int
) -> dict[str, list[tuple[str, float]]]:
    """Top co-occurring species per slot, each with its count relative to the slot maximum."""
    main_fgs = list(main_fgs)
    alternatives: dict[str, list[tuple[str, float]]] = {}
    for slot in SLOTS:
        ranked = base.cooccurring_alternatives(slot, reaction_type, main_fgs)[:per_slot]
        if ranked:
            top = ranked[0][1]
            alternatives[slot] = [(name, count / top) for name, count in ranked]
    return alternatives


def recombine(
    matched: list[Candidate],
    alternatives: dict[str, list[tuple[str, float]]],
    limit: int,
    *,
    variant_cap: int = 8,
    feasible: Feasibility | None = None,
) -> list[Candidate]:
    """Slot-level variants of matched configs: one-slot replacements, then two-slot.

    Variants equal to a matched config or an earlier variant are dropped, as are
    infeasible ones. At most ``variant_cap`` variants come from each config.
    """
    seen = {c.canonical_id for c in matched}
    variants: list[Candidate] = []
    for parent in matched:
        if len(variants) >= limit:
            break
        produced = 0
        for replaced in _replacement_sets(parent.config, alternatives):
            if produced >= variant_cap or len(variants) >= limit:
                break
            config = parent.config
            for slot, name, _ in replaced:
                config = config.with_slot(slot, name)
            if config.canonical_id in seen:
                continue
            if feasible is not None and not feasible(config):
                continue
            seen.add(config.canonical_id)
            produced += 1
            variants.append(
                Candidate(
                    config=config,
                    origin="similar",
                    provenance=parent.provenance,
                    priority=sum(share for _, _, share in replaced) / len(replaced),
                    parent=parent.canonical_id,
                    replaced=tuple(slot for slot, _, _ in replaced),
                )
            )
    return variants


def _replacement_sets(
    config: ConditionConfig, alternatives: dict[str, list[tuple[str, float]]]
) -> Iterator[tuple[tuple[str, str, float], ...]]:
    options = {
        slot: [(slot, name, share) for name, share in alternatives.get(slot, []) if name != value]
        for slot, value in zip(SLOTS, config.slots())
    }
    for slot in SLOTS:
        for choice in options[slot]:
            yield (choice,)
    for first, second in itertools.combinations(SLOTS, 2):
        for a in options[first]:
            for b in options[second]:
                yield (a, b)


def build_pool(
    matched: list[Candidate], similar: list[Candidate], cap: int = DEFAULT_POOL_CAP
) -> CandidatePool:
    """Matched entries first, ordered by channel hits then priority; similar ones after."""
    ordered_matched = sorted(
        matched, key=lambda c: (-len(c.channels), -round(c.priority, 12), c.canonical_id)
    )
    ordered_similar = sorted(similar, key=lambda c: (-round(c.priority, 12), c.canonical_id))
    kept: list[Candidate] = []
    seen: set[str] = set()
    for candidate in itertools.chain(ordered_matched, ordered_similar):
        if len(kept) >= cap:
            break
        if candidate.canonical_id in seen:
            continue
        seen.add(candidate.canonical_id)
        kept.append(candidate)
    return CandidatePool(candidates=tuple(kept), cap=cap)


@dataclass(frozen=True)
class RecallResult:
    pool: CandidatePool
    channels: ChannelSets
    matched: dict[str, MatchedHit] = field(default_factory=dict)


def recall(
    reaction: Reaction,
    report: ReactionReport,
    base: ReactionBase,
    species: SpeciesDictionary,
    config: PipelineConfig,
) -> RecallResult:
    """Channels, matched union, feasibility filter, recombination and truncation."""
    reactants = reaction.reactant_molecules()
    products = reaction.product_molecules()
    channels = recall_channels(
        base, report.reaction_type, reactants, products, config.k_per_channel
    )
    matched = merge_matched(channels.type_ids, channels.reactant, channels.product)
    feasible = hard_check_filter(reaction, report, species) if config.feasibility_filter else None
    matched = feasibility_filter(matched, base, feasible)
    matched_list = matched_candidates(matched, base)

    alternatives = slot_alternatives(
        base, report.reaction_type, report.main_fg_names, config.alternatives_per_slot
    )
    ordered = build_pool(matched_list, [], cap=len(matched_list) or 1).candidates
    similar = recombine(
        list(ordered),
        alternatives,
        max(0, config.pool_cap - len(ordered)),
        variant_cap=config.variant_cap,
        feasible=feasible,
    )
    return RecallResult(
        pool=build_pool(matched_list, similar, cap=config.pool_cap),
        channels=channels,
        matched=matched,
    )
