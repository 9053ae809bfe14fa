"""End-to-end orchestration: report, recall, tournament, certification and evaluation."""

from __future__ import annotations

import json
import logging
from collections import Counter
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

from rxncond.analysis import Analysis, analyze_reaction, keywords_from_report
from rxncond.balance import LeavingGroup, load_leaving_groups
from rxncond.config import PipelineConfig
from rxncond.debate import (
    MemoryBoard,
    TournamentResult,
    global_rank,
    tournament,
    trace_events,
)
from rxncond.errors import (
    DebateError,
    MalformedTestSet,
    NotEnoughValid,
    PipelineError,
    PoolTooSmall,
    RxnCondError,
)
from rxncond.judges import HeuristicJudge, JudgeBackend, JudgeContext, build_panel
from rxncond.knowbase import (
    IngestReport,
    ReactionBase,
    ingest,
    load_snapshot,
    parse_record,
    side_profile,
)
from rxncond.memory import RunStore
from rxncond.models import (
    SLOTS,
    CheckDoc,
    ClaimDoc,
    ConditionConfig,
    EvidenceDoc,
    RationaleDoc,
    Reaction,
    ReactionRecord,
    RecommendationDoc,
    RecommendationReport,
    ValidityDoc,
)
from rxncond.rationale import (
    RecommendationSet,
    ScoredCandidate,
    build_rationale,
    cite_evidence,
    select_final,
    slot_agreement,
    utility,
    validate,
)
from rxncond.recall import RecallResult, recall
from rxncond.species import SpeciesDictionary, load_species
from rxncond.tagger import FGLibrary, load_library
from rxncond.transcript import SFTExample, serialize_sft_example
from rxncond.warning_policy import WarningPolicy

logger = logging.getLogger(__name__)

DEFAULT_KS: tuple[int, ...] = (1, 5, 10)
MATCHING_RULE = "canonical-name equality per slot; empty label matches empty slot"


@dataclass(frozen=True)
class Resources:
    """Loaded tables and the reaction base a run works against."""

    config: PipelineConfig
    library: FGLibrary
    species: SpeciesDictionary
    leaving_groups: tuple[LeavingGroup, ...]
    base: ReactionBase
    ingest_report: IngestReport | None = None

    def with_base(self, base: ReactionBase) -> Resources:
        return replace(self, base=base, ingest_report=None)


def load_resources(config: PipelineConfig, *, policy: WarningPolicy | None = None) -> Resources:
    """Load the FG library, species, leaving groups and the base named by ``config``.

    A ``.json`` base path is read as a snapshot; anything else is ingested as records.
    """
    library = load_library(config.fg_library_path)
    species = load_species(config.species_path)
    leaving_groups = load_leaving_groups(config.leaving_groups_path)
    report: IngestReport | None = None
    if config.base_path is not None and config.base_path.suffix == ".json":
        base = load_snapshot(
            config.base_path,
            library=library,
            species=species,
            leaving_groups=leaving_groups,
            facet_weights=config.facet_weights,
            mcs_budget=config.similarity_mcs_budget,
        )
    else:
        base, report = ingest(
            config.base_path,
            library=library,
            species=species,
            leaving_groups=leaving_groups,
            facet_weights=config.facet_weights,
            mcs_budget=config.similarity_mcs_budget,
            policy=policy,
        )
    return Resources(config, library, species, leaving_groups, base, report)


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Attribute any domain error raised inside the block to ``name``."""
    try:
        yield
    except PipelineError:
        raise
    except RxnCondError as e:
        raise PipelineError(name, e) from e


# --- stages ------------------------------------------------------------------


def run_report(
    reaction: Reaction, res: Resources, *, policy: WarningPolicy | None = None
) -> Analysis:
    with stage("report"):
        return analyze_reaction(
            reaction, res.base, res.library, res.leaving_groups, res.config, policy=policy
        )


def run_recall(reaction: Reaction, analysis: Analysis, res: Resources) -> RecallResult:
    with stage("recall"):
        return recall(reaction, analysis.report, res.base, res.species, res.config)


def judge_context(reaction: Reaction, analysis: Analysis, res: Resources) -> JudgeContext:
    signals = res.base.signal_features(keywords_from_report(analysis.report), analysis.evidence)
    return JudgeContext(
        reaction=reaction,
        report=analysis.report,
        base=res.base,
        species=res.species,
        config=res.config,
        evidence=analysis.evidence,
        signals=signals,
    )


def _panel_for(config: PipelineConfig) -> tuple[dict[str, JudgeBackend], int]:
    """Backends and micro-round count after applying the debate ablations."""
    panel = build_panel(config)
    micro_rounds = config.micro_rounds
    if config.has_ablation("no_debate"):
        panel = {"Full": panel.get("Full") or HeuristicJudge("Full")}
        micro_rounds = 0
    elif config.has_ablation("no_multistep"):
        micro_rounds = 0
    return panel, micro_rounds


def run_tournament(
    recalled: RecallResult,
    context: JudgeContext,
    res: Resources,
    *,
    board: MemoryBoard,
    policy: WarningPolicy | None = None,
) -> TournamentResult:
    """Reduce the pool to exactly ``tournament_k`` survivors.

    Raises ``PoolTooSmall`` (wrapped for the tournament stage) when recall left
    fewer candidates than that.
    """
    config = res.config
    with stage("tournament"):
        pool = recalled.pool
        k = config.tournament_k
        if not len(pool):
            raise PoolTooSmall("recall produced no candidates")
        if len(pool) < k:
            raise PoolTooSmall(f"pool holds {len(pool)} candidate(s), tournament needs {k}")
        if config.has_ablation("no_pairing"):
            board.log(f"global ranking of {len(pool)} candidates")
            return global_rank(pool, config.panel, context, k)
        panel, micro_rounds = _panel_for(config)
        return tournament(
            pool,
            panel,
            context,
            k=k,
            seed=config.seed,
            micro_rounds=micro_rounds,
            board=board,
            workers=config.workers,
            policy=policy,
        )


def score_survivors(
    result: TournamentResult, analysis: Analysis, context: JudgeContext, res: Resources
) -> list[ScoredCandidate]:
    """Assemble and check a certificate for every survivor and compute its utility."""
    config = res.config
    report = analysis.report
    reaction = report.reaction
    reactants = side_profile(reaction.reactant_molecules(), res.library)
    products = side_profile(reaction.product_molecules(), res.library)
    reaction_type = report.reaction_type if report.reaction_type != "unknown" else None
    cache: dict = {}
    scored: list[ScoredCandidate] = []
    for candidate in result.survivors:
        cited = cite_evidence(
            res.base,
            candidate.config,
            [*candidate.provenance, *report.citations],
            reactants,
            products,
            reaction_type,
            weights=config.align_weights,
            facet_cache=cache,
        )
        checks = context.checks(candidate.config)
        roles = {name: res.species.roles(name) for name in candidate.config.species()}
        rationale = build_rationale(candidate.config, report, checks, cited, roles)
        validity = validate(
            candidate.config,
            rationale,
            config.delta,
            base=res.base,
            weights=config.align_weights,
        )
        scored.append(
            ScoredCandidate(
                config=candidate.config,
                utility=utility(
                    validity.align, checks.pass_fraction, result.depth(candidate.canonical_id)
                ),
                rationale=rationale,
                validity=validity,
            )
        )
    return scored


def select(scored: Sequence[ScoredCandidate], k_out: int, lambda_div: float) -> RecommendationSet:
    """Keep valid candidates only and choose the final set.

    Raises:
        NotEnoughValid: With per-criterion failure counts over the rejected candidates.
    """
    valid = [s for s in scored if s.validity is not None and s.validity.valid]
    if len(valid) < k_out:
        counts: Counter[str] = Counter()
        for s in scored:
            if s.validity is not None and not s.validity.valid:
                counts.update(s.validity.failed_criteria())
        raise NotEnoughValid(k_out, len(valid), dict(counts))
    return select_final(valid, k_out, lambda_div)


def recommendation_document(
    reaction: Reaction, reaction_type: str, selection: RecommendationSet
) -> RecommendationReport:
    entries = []
    for rank, s in enumerate(selection.entries, start=1):
        assert s.rationale is not None and s.validity is not None
        rationale = s.rationale
        entries.append(
            RecommendationDoc(
                rank=rank,
                config=s.config,
                utility=round(s.utility, 12),
                validity=ValidityDoc(
                    constr_ok=s.validity.constr_ok,
                    align=round(s.validity.align, 12),
                    delta=s.validity.delta,
                    coherent_ok=s.validity.coherent_ok,
                    valid=s.validity.valid,
                ),
                rationale=RationaleDoc(
                    mechanism=rationale.mechanism,
                    checks=[
                        CheckDoc(name=c.name, passed=c.passed, message=c.message)
                        for c in rationale.checks.checks
                    ],
                    evidence=[
                        EvidenceDoc(
                            record_id=r.record_id,
                            type_match=r.facets.type_match,
                            fg_overlap=round(r.facets.fg, 12),
                            mcs=round(r.facets.mcs, 12),
                            fingerprint=round(r.facets.fingerprint, 12),
                            slot_agreement=round(slot_agreement(s.config, r.config), 12),
                        )
                        for r in rationale.evidence
                    ],
                    claims=[
                        ClaimDoc(text=c.text, support=list(c.support)) for c in rationale.claims
                    ],
                ),
            )
        )
    return RecommendationReport(
        reaction=reaction,
        reaction_type=reaction_type,
        k_out=selection.k_out,
        lambda_div=selection.lambda_div,
        objective=round(selection.objective, 12),
        diversity=round(selection.diversity, 12),
        entries=entries,
    )


@dataclass
class RunOutcome:
    """Everything one query produced, in pipeline order."""

    analysis: Analysis
    recalled: RecallResult | None = None
    result: TournamentResult | None = None
    board: MemoryBoard = field(default_factory=MemoryBoard)
    selection: RecommendationSet | None = None
    document: RecommendationReport | None = None

    def bracket(self) -> TournamentResult:
        if self.result is None:
            raise PipelineError("tournament", DebateError("tournament has not run"))
        return self.result


def run_until_tournament(
    reaction: Reaction,
    res: Resources,
    *,
    store: RunStore | None = None,
    policy: WarningPolicy | None = None,
) -> tuple[RunOutcome, JudgeContext]:
    analysis = run_report(reaction, res, policy=policy)
    outcome = RunOutcome(analysis=analysis)
    if store is not None:
        store.put("report.json", analysis.report)
    outcome.recalled = run_recall(reaction, analysis, res)
    if store is not None:
        store.put("pool.json", outcome.recalled.pool.to_document())
    context = judge_context(reaction, analysis, res)
    outcome.result = run_tournament(
        outcome.recalled, context, res, board=outcome.board, policy=policy
    )
    if store is not None:
        store.put("board.json", outcome.board.to_document())
        store.put("bracket.json", outcome.result.to_document())
    return outcome, context


def recommend(
    reaction: Reaction,
    res: Resources,
    *,
    k_out: int | None = None,
    store: RunStore | None = None,
    policy: WarningPolicy | None = None,
) -> RunOutcome:
    """Report, recall, tournament, certificates and final diverse selection for one query.

    Intermediate documents go to ``store`` as each stage completes, so a run that
    ends in ``NotEnoughValid`` still leaves its report, pool and bracket behind.
    """
    outcome, context = run_until_tournament(reaction, res, store=store, policy=policy)
    with stage("select"):
        scored = score_survivors(outcome.bracket(), outcome.analysis, context, res)
        outcome.selection = select(scored, k_out or res.config.k_out, res.config.lambda_div)
    outcome.document = recommendation_document(
        reaction, outcome.analysis.report.reaction_type, outcome.selection
    )
    if store is not None:
        store.put("recommendations.json", outcome.document)
    return outcome


def sft_examples(reaction: Reaction, outcome: RunOutcome) -> list[SFTExample]:
    """One example per played match from the board's tool trace and the panel verdict."""
    if outcome.result is None:
        return []
    examples = []
    for match in outcome.result.matches():
        posts = outcome.board.posts_for(match.match_id)
        latest = {p.agent: p for p in posts}
        examples.append(
            serialize_sft_example(
                reaction.to_smiles(),
                match.option_a,
                match.option_b,
                trace_events(posts),
                match.winner,
                reasoning=[latest[agent].summary for agent in latest],
            )
        )
    return examples


# --- evaluation ----------------------------------------------------------------


def _read_text(path: Path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise MalformedTestSet(f"cannot read {path}: {e}") from e


def load_test_set(path: Path) -> list[ReactionRecord]:
    """Labelled records in base format.

    Raises:
        MalformedTestSet: On any unreadable line, naming its line number.
    """
    records: list[ReactionRecord] = []
    for line_no, line in enumerate(_read_text(path), start=1):
        if not line.strip():
            continue
        try:
            records.append(parse_record(line))
        except ValueError as e:
            raise MalformedTestSet(f"line {line_no}: {e}") from e
    if not records:
        raise MalformedTestSet(f"{path}: no test records")
    return records


def load_predictions(path: Path) -> dict[str, list[ConditionConfig]]:
    """Ranked configurations per record id from ``{"id": ..., "configs": [[...], ...]}`` lines."""
    predictions: dict[str, list[ConditionConfig]] = {}
    for line_no, line in enumerate(_read_text(path), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            configs = [ConditionConfig.from_slots(values) for values in data["configs"]]
            predictions[str(data["id"])] = configs
        except (ValueError, KeyError, TypeError) as e:
            raise MalformedTestSet(f"{path} line {line_no}: {e}") from e
    return predictions


@dataclass(frozen=True)
class EvalResult:
    """Per-slot top-k accuracies in percent."""

    accuracy: dict[str, dict[int, float]]
    queries: int
    ks: tuple[int, ...]
    matching: str = MATCHING_RULE
    missing: tuple[str, ...] = ()

    def to_document(self) -> dict:
        return {
            "queries": self.queries,
            "ks": list(self.ks),
            "matching": self.matching,
            "missing": list(self.missing),
            "accuracy": {
                slot: {str(k): round(v, 12) for k, v in row.items()}
                for slot, row in self.accuracy.items()
            },
        }

    def render_table(self) -> str:
        header = "slot".ljust(10) + "".join(f"top-{k}".rjust(9) for k in self.ks)
        rows = [
            slot.ljust(10) + "".join(f"{self.accuracy[slot][k]:9.1f}" for k in self.ks)
            for slot in SLOTS
        ]
        return "\n".join([header, *rows, f"queries: {self.queries}"]) + "\n"


def score_predictions(
    records: Sequence[ReactionRecord],
    predictions: dict[str, list[ConditionConfig]],
    species: SpeciesDictionary,
    ks: Sequence[int] = DEFAULT_KS,
) -> EvalResult:
    """A slot is a hit at k when any of the top-k configs matches its label after
    canonicalization. Records without predictions count as misses."""
    ks = tuple(sorted(set(ks)))
    if not ks or ks[0] < 1:
        raise ValueError("k values must be positive")
    hits = {slot: dict.fromkeys(ks, 0) for slot in SLOTS}
    missing: list[str] = []
    for record in records:
        label = species.canonical_config(record.condition)
        if record.id not in predictions:
            missing.append(record.id)
        ranked = [species.canonical_config(c) for c in predictions.get(record.id, [])]
        for slot in SLOTS:
            want = getattr(label, slot)
            for k in ks:
                if any(getattr(c, slot) == want for c in ranked[:k]):
                    hits[slot][k] += 1
    n = len(records)
    accuracy = {
        slot: {k: (100.0 * hits[slot][k] / n if n else 0.0) for k in ks} for slot in SLOTS
    }
    return EvalResult(accuracy=accuracy, queries=n, ks=ks, missing=tuple(missing))


def live_predictions(
    records: Sequence[ReactionRecord],
    res: Resources,
    *,
    policy: WarningPolicy | None = None,
) -> dict[str, list[ConditionConfig]]:
    """Tournament survivors per test record, run against the base without that record."""
    predictions: dict[str, list[ConditionConfig]] = {}
    for record in records:
        scoped = res.with_base(res.base.excluding([record.id]))
        try:
            outcome, _ = run_until_tournament(record.reaction, scoped, policy=policy)
        except PipelineError as e:
            logger.debug("no prediction for %s: %s", record.id, e)
            predictions[record.id] = []
            continue
        predictions[record.id] = [c.config for c in outcome.bracket().survivors]
    return predictions
