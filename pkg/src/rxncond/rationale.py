"""Rationale certificates, validity checks and diversity-aware final selection."""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass

from rxncond.balance import ConstraintReport
from rxncond.config import AlignWeights
from rxncond.errors import NotEnoughValid
from rxncond.knowbase import Evidence, EvidenceItem, Facets, ReactionBase, SideProfile
from rxncond.models import SLOTS, ConditionConfig, ReactionReport

EXACT_SEARCH_LIMIT = 15
EVIDENCE_LIMIT = 5
UTILITY_WEIGHTS = (0.5, 0.3, 0.2)


def slot_agreement(a: ConditionConfig, b: ConditionConfig) -> float:
    """Fraction of the five slots holding the same value."""
    return sum(1 for x, y in zip(a.slots(), b.slots()) if x == y) / len(SLOTS)


def slot_distance(a: ConditionConfig, b: ConditionConfig) -> float:
    """Normalized slot Hamming distance."""
    return 1.0 - slot_agreement(a, b)


def diversity(configs: Sequence[ConditionConfig]) -> float:
    """Mean pairwise slot distance; 0 for fewer than two configs."""
    if len(configs) < 2:
        return 0.0
    pairs = list(itertools.combinations(configs, 2))
    return math.fsum(slot_distance(a, b) for a, b in pairs) / len(pairs)


# --- alignment ---------------------------------------------------------------


@dataclass(frozen=True)
class CitedRecord:
    """A cited record with its facets against the query and its recorded config."""

    record_id: str
    weight: float
    facets: Facets
    config: ConditionConfig


def record_alignment(cited: CitedRecord, c: ConditionConfig, weights: AlignWeights) -> float:
    f = cited.facets
    facet_score = math.fsum(
        (
            weights.type * (1.0 if f.type_match else 0.0),
            weights.fg * f.fg,
            weights.mcs * f.mcs,
            weights.fingerprint * f.fingerprint,
        )
    )
    return min(1.0, facet_score) * slot_agreement(c, cited.config)


def align_score(
    cited: Sequence[CitedRecord], c: ConditionConfig, weights: AlignWeights | None = None
) -> float:
    """Weighted mean over cited records of facet alignment scaled by slot agreement.

    Weights are the records' similarity scores (uniform when all are zero); no
    evidence gives 0.
    """
    if not cited:
        return 0.0
    weights = weights or AlignWeights()
    use_scores = any(r.weight > 0 for r in cited)
    mass = [r.weight if use_scores else 1.0 for r in cited]
    total = math.fsum(mass)
    value = math.fsum(m * record_alignment(r, c, weights) for m, r in zip(mass, cited)) / total
    return min(1.0, max(0.0, value))


def cite_evidence(
    base: ReactionBase,
    c: ConditionConfig,
    record_ids: Sequence[str],
    reactants: SideProfile,
    products: SideProfile | None,
    reaction_type: str | None,
    *,
    weights: AlignWeights | None = None,
    limit: int = EVIDENCE_LIMIT,
    facet_cache: dict[str, Facets] | None = None,
) -> list[CitedRecord]:
    """Pick the ``limit`` records that best support ``c`` among the given ids."""
    weights = weights or AlignWeights()
    cache = facet_cache if facet_cache is not None else {}
    scored: list[tuple[float, CitedRecord]] = []
    for rid in dict.fromkeys(record_ids):
        if rid not in base:
            continue
        if rid not in cache:
            cache[rid] = base.facets(rid, reactants, products, reaction_type)
        facets = cache[rid]
        cited = CitedRecord(
            record_id=rid,
            weight=facets.combined(base.facet_weights),
            facets=facets,
            config=base.get(rid).record.condition,
        )
        scored.append((record_alignment(cited, c, weights), cited))
    scored.sort(key=lambda item: (-round(item[0], 12), item[1].record_id))
    return [cited for _, cited in scored[:limit]]


# --- certificate -------------------------------------------------------------


@dataclass(frozen=True)
class Claim:
    """A derivation step; support tags are ``M:<field>``, ``E:<record id>`` or ``S:<check>``."""

    text: str
    support: tuple[str, ...]


@dataclass(frozen=True)
class Rationale:
    mechanism: dict[str, str | list[str]]
    checks: ConstraintReport
    evidence: tuple[CitedRecord, ...]
    claims: tuple[Claim, ...]

    @property
    def evidence_ids(self) -> list[str]:
        return [r.record_id for r in self.evidence]


def mechanism_summary(report: ReactionReport) -> dict[str, str | list[str]]:
    return {
        "main_fgs": report.main_fg_names,
        "reaction_type": report.reaction_type if report.reaction_type != "unknown" else "",
        "byproduct": report.byproduct,
        "balanced_equation": report.balanced_equation,
    }


def derive_claims(
    c: ConditionConfig,
    mechanism: dict[str, str | list[str]],
    checks: ConstraintReport,
    evidence: Sequence[CitedRecord],
    species_roles: dict[str, frozenset[str]] | None = None,
) -> list[Claim]:
    """Template claims linking the configuration to the mechanism and precedent."""
    claims: list[Claim] = []
    if mechanism.get("main_fgs"):
        claims.append(
            Claim(
                f"reactive centre set by {', '.join(mechanism['main_fgs'])}", ("M:main_fgs",)
            )
        )
    if mechanism.get("reaction_type"):
        claims.append(Claim(f"classified as {mechanism['reaction_type']}", ("M:reaction_type",)))
    if checks.get("mass_balance") is not None:
        claims.append(
            Claim(
                f"mass balance: {mechanism.get('balanced_equation') or 'not assessed'}",
                ("S:mass_balance",),
            )
        )
    if mechanism.get("byproduct") and checks.get("byproduct_compatibility") is not None:
        claims.append(
            Claim(
                f"by-product {mechanism['byproduct']} is handled by the configuration",
                ("M:byproduct", "S:byproduct_compatibility"),
            )
        )
    roles = species_roles or {}
    for slot, value in zip(SLOTS, c.slots()):
        if not value:
            continue
        precedent = [r.record_id for r in evidence if getattr(r.config, slot) == value]
        if precedent:
            tags = tuple(f"E:{rid}" for rid in precedent[:2])
            role = ", ".join(sorted(roles.get(value, ()))) or "species"
            claims.append(Claim(f"{slot} {value} ({role}) has precedent", tags))
    return claims


def build_rationale(
    c: ConditionConfig,
    report: ReactionReport,
    checks: ConstraintReport,
    evidence: Sequence[CitedRecord],
    species_roles: dict[str, frozenset[str]] | None = None,
) -> Rationale:
    mechanism = mechanism_summary(report)
    claims = derive_claims(c, mechanism, checks, evidence, species_roles)
    return Rationale(
        mechanism=mechanism, checks=checks, evidence=tuple(evidence), claims=tuple(claims)
    )


def coherence_check(
    claims: Sequence[Claim],
    mechanism: dict[str, str | list[str]],
    evidence_ids: Sequence[str],
    checks: ConstraintReport,
    base: ReactionBase | None = None,
) -> bool:
    """Every claim has support and every tag resolves to a non-empty M field, a cited
    existing record, or a passed hard check."""
    if not claims:
        return False
    cited = set(evidence_ids)
    for claim in claims:
        if not claim.support:
            return False
        for tag in claim.support:
            kind, _, name = tag.partition(":")
            if kind == "M":
                if not mechanism.get(name):
                    return False
            elif kind == "E":
                if name not in cited or (base is not None and name not in base):
                    return False
            elif kind == "S":
                result = checks.get(name)
                if result is None or not result.passed:
                    return False
            else:
                return False
    return True


@dataclass(frozen=True)
class ValidityResult:
    constr_ok: bool
    align: float
    delta: float
    coherent_ok: bool

    @property
    def valid(self) -> bool:
        return self.constr_ok and self.align >= self.delta and self.coherent_ok

    def failed_criteria(self) -> list[str]:
        failed = []
        if not self.constr_ok:
            failed.append("constraints")
        if self.align < self.delta:
            failed.append("alignment")
        if not self.coherent_ok:
            failed.append("coherence")
        return failed


def validate(
    c: ConditionConfig,
    rationale: Rationale,
    delta: float,
    *,
    base: ReactionBase | None = None,
    weights: AlignWeights | None = None,
) -> ValidityResult:
    """Hard checks pass, alignment reaches ``delta`` (inclusive) and the derivation is coherent."""
    return ValidityResult(
        constr_ok=rationale.checks.passed,
        align=align_score(rationale.evidence, c, weights),
        delta=delta,
        coherent_ok=coherence_check(
            rationale.claims, rationale.mechanism, rationale.evidence_ids, rationale.checks, base
        ),
    )


def utility(align: float, pass_fraction: float, depth: float) -> float:
    """0.5 * alignment + 0.3 * hard-check pass fraction + 0.2 * tournament depth."""
    w_align, w_checks, w_depth = UTILITY_WEIGHTS
    return math.fsum((w_align * align, w_checks * pass_fraction, w_depth * depth))


# --- selection -----------------------------------------------------------------


@dataclass(frozen=True)
class ScoredCandidate:
    config: ConditionConfig
    utility: float
    rationale: Rationale | None = None
    validity: ValidityResult | None = None

    @property
    def canonical_id(self) -> str:
        return self.config.canonical_id


@dataclass(frozen=True)
class RecommendationSet:
    entries: tuple[ScoredCandidate, ...]
    k_out: int
    lambda_div: float
    objective: float
    diversity: float = 0.0
    method: str = "exact"


def objective(chosen: Sequence[ScoredCandidate], lambda_div: float) -> float:
    return math.fsum(c.utility for c in chosen) + lambda_div * diversity([c.config for c in chosen])


def _subset_key(chosen: Sequence[ScoredCandidate], lambda_div: float) -> tuple:
    ids = tuple(sorted(c.canonical_id for c in chosen))
    return (-round(objective(chosen, lambda_div), 12), ids)


def _exact(candidates: list[ScoredCandidate], k: int, lambda_div: float) -> list[ScoredCandidate]:
    best = min(
        itertools.combinations(candidates, k), key=lambda subset: _subset_key(subset, lambda_div)
    )
    return list(best)


def _greedy(candidates: list[ScoredCandidate], k: int, lambda_div: float) -> list[ScoredCandidate]:
    chosen: list[ScoredCandidate] = []
    remaining = sorted(candidates, key=lambda c: c.canonical_id)
    for _ in range(k):
        pick = min(
            remaining,
            key=lambda c: (-round(objective([*chosen, c], lambda_div), 12), c.canonical_id),
        )
        chosen.append(pick)
        remaining.remove(pick)
    return chosen


def _ordered(chosen: list[ScoredCandidate]) -> tuple[ScoredCandidate, ...]:
    return tuple(sorted(chosen, key=lambda c: (-round(c.utility, 12), c.canonical_id)))


def select_final(
    candidates: Sequence[ScoredCandidate], k_out: int, lambda_div: float, *, method: str = "auto"
) -> RecommendationSet:
    """Choose ``k_out`` candidates maximizing total utility plus ``lambda_div`` times diversity.

    Exhaustive over subsets for at most 15 candidates, greedy marginal gain otherwise.
    Entries are returned by utility. Ties resolve by canonical ids.

    Raises:
        NotEnoughValid: If fewer than ``k_out`` candidates are given.
    """
    pool = list({c.canonical_id: c for c in candidates}.values())
    if k_out < 1:
        raise ValueError("k_out must be at least 1")
    if len(pool) < k_out:
        raise NotEnoughValid(k_out, len(pool), {})
    if method == "auto":
        method = "exact" if len(pool) <= EXACT_SEARCH_LIMIT else "greedy"
    search = _exact if method == "exact" else _greedy
    chosen = search(pool, k_out, lambda_div)
    return RecommendationSet(
        entries=_ordered(chosen),
        k_out=k_out,
        lambda_div=lambda_div,
        objective=objective(chosen, lambda_div),
        diversity=diversity([c.config for c in chosen]),
        method=method,
    )


def evidence_from_cited(cited: Sequence[CitedRecord]) -> Evidence:
    return Evidence(tuple(EvidenceItem(r.record_id, r.weight, r.facets) for r in cited))
