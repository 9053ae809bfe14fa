"""Judge backends for the debate panel: heuristic, replayed and remote."""

from __future__ import annotations

import json
import math
import threading
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Protocol

import requests
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from rxncond.analysis import keywords_from_report
from rxncond.balance import ConstraintReport, run_hard_checks
from rxncond.config import PipelineConfig
from rxncond.errors import BackendUnavailable
from rxncond.knowbase import Evidence, ReactionBase, SignalFeatures
from rxncond.models import SLOTS, ConditionConfig, Reaction, ReactionReport
from rxncond.recall import Candidate
from rxncond.species import SpeciesDictionary

Choice = Literal["A", "B"]

# Share of each slot in a specialist's view of a configuration.
ROLE_SLOT_WEIGHTS: dict[str, dict[str, float]] = {
    "Full": {slot: 0.2 for slot in SLOTS},
    "Cat": {"catalyst1": 0.6, "solvent1": 0.1, "solvent2": 0.1, "reagent1": 0.1, "reagent2": 0.1},
    "Sol": {"catalyst1": 0.1, "solvent1": 0.4, "solvent2": 0.3, "reagent1": 0.1, "reagent2": 0.1},
    "Rea": {"catalyst1": 0.1, "solvent1": 0.1, "solvent2": 0.1, "reagent1": 0.4, "reagent2": 0.3},
}
HARD_CHECK_PENALTY = 1.0


@dataclass(frozen=True)
class ToolCall:
    """A lookup made while judging: ``search`` hits the base, ``memory`` reads the board."""

    kind: Literal["search", "memory"]
    query: str
    result: str


@dataclass(frozen=True)
class AgentDecision:
    """A draft or final judgment of one agent on one match."""

    agent: str
    choice: Choice
    confidence: float
    citations: tuple[str, ...] = ()
    rationale: str = ""
    scores: tuple[float, float] | None = None
    tools: tuple[ToolCall, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.choice not in ("A", "B"):
            raise ValueError(f"choice must be 'A' or 'B', got {self.choice!r}")


@dataclass(frozen=True)
class Post:
    """One board entry; micro-round 0 is the initial assessment."""

    match_id: str
    agent: str
    micro_round: int
    choice: Choice
    confidence: float
    summary: str
    citations: tuple[str, ...] = ()
    tools: tuple[ToolCall, ...] = ()

    def to_document(self) -> dict:
        return {
            "agent": self.agent,
            "micro_round": self.micro_round,
            "choice": self.choice,
            "confidence": round(self.confidence, 12),
            "summary": self.summary,
            "citations": list(self.citations),
            "tools": [{"kind": t.kind, "query": t.query, "result": t.result} for t in self.tools],
        }


@dataclass
class JudgeContext:
    """Everything a judge may consult for one query reaction."""

    reaction: Reaction
    report: ReactionReport
    base: ReactionBase
    species: SpeciesDictionary
    config: PipelineConfig
    evidence: Evidence = field(default_factory=Evidence)
    signals: SignalFeatures = field(default_factory=SignalFeatures)
    _memo: dict = field(default_factory=dict, repr=False)
    # Tournament workers share one context; every _memo access holds this.
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def widened(self, k: int) -> tuple[Evidence, Evidence, SignalFeatures]:
        """(new neighbours, merged evidence, signals) for a top-k reactant re-query; memoized."""
        key = ("widened", k)
        with self._lock:
            if key not in self._memo:
                reactants = self.reaction.reactant_molecules()
                wider = (
                    self.base.query_similar(reactants, "reactant", k) if reactants else Evidence()
                )
                merged = self.evidence.merge(wider)
                signals = self.base.signal_features(keywords_from_report(self.report), merged)
                self._memo[key] = (wider, merged, signals)
            return self._memo[key]

    def checks(self, config: ConditionConfig) -> ConstraintReport:
        key = ("checks", config.canonical_id)
        with self._lock:
            if key not in self._memo:
                self._memo[key] = run_hard_checks(
                    self.reaction, config, self.report, self.species
                )
            return self._memo[key]


@dataclass(frozen=True)
class JudgeRequest:
    match_id: str
    agent_role: str
    option_a: Candidate
    option_b: Candidate
    context: JudgeContext

    def option(self, choice: Choice) -> Candidate:
        return self.option_a if choice == "A" else self.option_b


class JudgeBackend(Protocol):
    def init_assess(self, request: JudgeRequest) -> AgentDecision: ...

    def refine(
        self, request: JudgeRequest, prior: AgentDecision, peers: list[Post], u: int
    ) -> AgentDecision: ...


def peers_disagree(prior: AgentDecision, peers: list[Post]) -> bool:
    """True when a strict majority of peer posts chose the other option."""
    if not peers:
        return False
    against = sum(1 for p in peers if p.choice != prior.choice)
    return against * 2 > len(peers)


# --- heuristic ---------------------------------------------------------------


def _slot_share(signals: SignalFeatures, slot: str, value: str) -> float:
    shares = signals.s_cond.get(slot, {})
    if value:
        return shares.get(value, 0.0)
    # An empty slot agrees with every cited record that also left it empty.
    return max(0.0, 1.0 - math.fsum(shares.values())) if shares else 0.0


def slot_agreement(signals: SignalFeatures, config: ConditionConfig, role: str) -> float:
    weights = ROLE_SLOT_WEIGHTS[role]
    return math.fsum(weights[s] * _slot_share(signals, s, v) for s, v in zip(SLOTS, config.slots()))


def evidence_strength(evidence: Evidence) -> float:
    if not evidence:
        return 0.0
    return math.fsum(item.score for item in evidence.items) / len(evidence)


class HeuristicJudge:
    """Deterministic judge scoring options from co-occurrence signals and hard checks.

    The initial score of an option is ``0.8 * slot agreement + 0.2 * priority`` with
    slot agreement weighted by the agent's specialty. Refinement re-queries the base
    with a wider neighbourhood and applies a penalty to options failing a hard check.
    """

    def __init__(self, role: str) -> None:
        if role not in ROLE_SLOT_WEIGHTS:
            raise ValueError(f"unknown agent role {role!r}")
        self.role = role

    def option_score(self, candidate: Candidate, signals: SignalFeatures) -> float:
        return 0.8 * slot_agreement(signals, candidate.config, self.role) + 0.2 * min(
            1.0, candidate.priority
        )

    def _decide(
        self,
        request: JudgeRequest,
        scores: tuple[float, float],
        evidence: Evidence,
        tools: tuple[ToolCall, ...],
        note: str,
    ) -> AgentDecision:
        ctx = request.context
        a, b = scores
        if round(a, 12) == round(b, 12):
            choice: Choice = (
                "A" if request.option_a.canonical_id <= request.option_b.canonical_id else "B"
            )
        else:
            choice = "A" if a > b else "B"
        prior = ctx.config.neutral_prior
        margin = min(1.0, abs(a - b))
        confidence = prior + (1.0 - prior) * margin * evidence_strength(evidence)
        picked = request.option(choice)
        return AgentDecision(
            agent=self.role,
            choice=choice,
            confidence=min(1.0, confidence),
            citations=tuple(evidence.record_ids),
            rationale=(
                f"{self.role} prefers {choice} ({picked.canonical_id}); "
                f"scores A={a:.3f} B={b:.3f}; {note}"
            ),
            scores=(a, b),
            tools=tools,
        )

    def init_assess(self, request: JudgeRequest) -> AgentDecision:
        ctx = request.context
        scores = (
            self.option_score(request.option_a, ctx.signals),
            self.option_score(request.option_b, ctx.signals),
        )
        tools = (
            ToolCall(
                "search",
                f"neighbours of {ctx.reaction.to_smiles()}",
                ",".join(ctx.evidence.record_ids) or "none",
            ),
        )
        return self._decide(request, scores, ctx.evidence, tools, "initial assessment")

    def refine(
        self, request: JudgeRequest, prior: AgentDecision, peers: list[Post], u: int
    ) -> AgentDecision:
        ctx = request.context
        uncertain = prior.confidence < ctx.config.uncertainty_threshold
        if not uncertain and not peers_disagree(prior, peers):
            return prior

        k = ctx.config.type_vote_k * 2 ** (u + 1)
        wider, evidence, signals = ctx.widened(k)

        scores = []
        failed_notes = []
        for choice in ("A", "B"):
            option = request.option(choice)
            score = self.option_score(option, signals)
            checks = ctx.checks(option.config)
            if not checks.passed:
                score -= HARD_CHECK_PENALTY
                failed_notes.append(f"{choice} fails {', '.join(checks.failed)}")
            scores.append(score)

        tools = (
            *prior.tools,
            ToolCall("memory", f"board posts before micro-round {u + 1}", f"{len(peers)} posts"),
            ToolCall(
                "search", f"top-{k} reactant neighbours", ",".join(wider.record_ids) or "none"
            ),
        )
        note = "; ".join(failed_notes) or f"re-queried {len(wider)} records"
        decision = self._decide(request, (scores[0], scores[1]), evidence, tools, note)
        merged = tuple(dict.fromkeys((*prior.citations, *decision.citations)))
        return replace(decision, citations=merged)


# --- replay -------------------------------------------------------------------


class RecordedDecision(BaseModel):
    model_config = ConfigDict(extra="forbid")

    match_id: str
    agent_role: str
    micro_round: int = Field(ge=0)
    decision: Choice
    confidence: float = Field(ge=0.0, le=1.0)
    citations: list[str] = Field(default_factory=list)
    rationale: str = ""


class ReplayJudge:
    """Replays recorded decisions keyed by (match id, role, micro-round).

    A missing initial decision makes the backend unavailable for that match; a
    missing refinement leaves the prior draft unchanged.
    """

    def __init__(self, role: str, script: Mapping[tuple[str, str, int], RecordedDecision]) -> None:
        self.role = role
        self.script = dict(script)

    @classmethod
    def from_file(cls, role: str, path: Path) -> ReplayJudge:
        """Load a JSON-lines transcript file (one recorded decision per line)."""
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise BackendUnavailable(f"Cannot read replay script {path}: {e}") from e
        script: dict[tuple[str, str, int], RecordedDecision] = {}
        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                entry = RecordedDecision(**json.loads(line))
            except (json.JSONDecodeError, TypeError, PydanticValidationError) as e:
                raise BackendUnavailable(f"{path}:{line_no}: invalid recorded decision: {e}") from e
            script[(entry.match_id, entry.agent_role, entry.micro_round)] = entry
        return cls(role, script)

    def _lookup(self, request: JudgeRequest, u: int) -> RecordedDecision | None:
        return self.script.get((request.match_id, self.role, u))

    def _as_decision(self, entry: RecordedDecision) -> AgentDecision:
        return AgentDecision(
            agent=self.role,
            choice=entry.decision,
            confidence=entry.confidence,
            citations=tuple(entry.citations),
            rationale=entry.rationale,
        )

    def init_assess(self, request: JudgeRequest) -> AgentDecision:
        entry = self._lookup(request, 0)
        if entry is None:
            raise BackendUnavailable(f"no recorded decision for {request.match_id}/{self.role}")
        return self._as_decision(entry)

    def refine(
        self, request: JudgeRequest, prior: AgentDecision, peers: list[Post], u: int
    ) -> AgentDecision:
        entry = self._lookup(request, u + 1)
        return prior if entry is None else self._as_decision(entry)


# --- remote -------------------------------------------------------------------


class RemoteDecision(BaseModel):
    model_config = ConfigDict(extra="forbid")

    decision: Choice
    confidence: float = Field(ge=0.0, le=1.0)
    citations: list[str] = Field(default_factory=list)
    rationale: str = ""


class RemoteJudge:
    """Posts one JSON request per assessment to a configured endpoint."""

    def __init__(
        self,
        role: str,
        endpoint: str,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ) -> None:
        self.role = role
        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()

    def payload(self, request: JudgeRequest, peers: list[Post], u: int) -> dict:
        ctx = request.context
        return {
            "match_id": request.match_id,
            "agent_role": self.role,
            "option_a": request.option_a.config.model_dump(),
            "option_b": request.option_b.config.model_dump(),
            "reaction_report": ctx.report.model_dump(mode="json"),
            "evidence": ctx.evidence.record_ids,
            "peer_posts": [p.to_document() for p in peers],
            "micro_round": u,
        }

    def _call(self, request: JudgeRequest, peers: list[Post], u: int) -> AgentDecision:
        try:
            response = self.session.post(
                self.endpoint, json=self.payload(request, peers, u), timeout=self.timeout
            )
            response.raise_for_status()
            parsed = RemoteDecision(**response.json())
        except (requests.RequestException, ValueError, TypeError) as e:
            raise BackendUnavailable(f"remote judge {self.endpoint}: {e}") from e
        known = [rid for rid in parsed.citations if rid in request.context.base]
        return AgentDecision(
            agent=self.role,
            choice=parsed.decision,
            confidence=parsed.confidence,
            citations=tuple(known),
            rationale=parsed.rationale,
        )

    def init_assess(self, request: JudgeRequest) -> AgentDecision:
        return self._call(request, [], 0)

    def refine(
        self, request: JudgeRequest, prior: AgentDecision, peers: list[Post], u: int
    ) -> AgentDecision:
        return self._call(request, peers, u + 1)


def build_panel(config: PipelineConfig) -> dict[str, JudgeBackend]:
    """Backends for the configured panel roles, in turn order."""
    panel: dict[str, JudgeBackend] = {}
    for role in config.panel:
        kind, _, target = config.judge_spec(role).partition(":")
        if kind == "replay":
            panel[role] = ReplayJudge.from_file(role, Path(target))
        elif kind == "remote":
            panel[role] = RemoteJudge(role, target, timeout=config.remote_timeout)
        else:
            panel[role] = HeuristicJudge(role)
    return panel
