"""Panel debate, majority voting and the knockout tournament."""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from rxncond.errors import BackendUnavailable, PoolTooSmall
from rxncond.judges import (
    AgentDecision,
    Choice,
    HeuristicJudge,
    JudgeBackend,
    JudgeContext,
    JudgeRequest,
    Post,
    ToolCall,
)
from rxncond.models import AGENT_ORDER
from rxncond.recall import Candidate, CandidatePool
from rxncond.warning_policy import WarningPolicy, emit_warning

logger = logging.getLogger(__name__)

TieBreak = Literal["majority", "confidence-sum", "canonical-id"]


@dataclass
class MemoryBoard:
    """Append-only shared board: posts grouped per match plus the facilitator log."""

    report_ref: str = "report.json"
    posts: dict[str, list[Post]] = field(default_factory=dict)
    facilitator_log: list[str] = field(default_factory=list)

    def append(self, post: Post) -> None:
        self.posts.setdefault(post.match_id, []).append(post)

    def extend(self, match_id: str, posts: Sequence[Post]) -> None:
        for post in posts:
            if post.match_id != match_id:
                raise ValueError(f"post for {post.match_id} filed under {match_id}")
            self.append(post)

    def posts_for(self, match_id: str) -> list[Post]:
        return list(self.posts.get(match_id, []))

    def log(self, line: str) -> None:
        self.facilitator_log.append(line)

    def to_document(self) -> dict:
        return {
            "report": self.report_ref,
            "matches": {
                mid: [p.to_document() for p in posts] for mid, posts in sorted(self.posts.items())
            },
            "facilitator": list(self.facilitator_log),
        }


@dataclass(frozen=True)
class MatchOutcome:
    match_id: str
    option_a: str
    option_b: str
    decisions: tuple[AgentDecision, ...]
    winner: Choice
    tally: tuple[int, int]
    path: TieBreak
    abstentions: tuple[str, ...] = ()
    round: int = 0

    @property
    def winner_id(self) -> str:
        return self.option_a if self.winner == "A" else self.option_b

    @property
    def loser_id(self) -> str:
        return self.option_b if self.winner == "A" else self.option_a

    def to_document(self) -> dict:
        return {
            "match_id": self.match_id,
            "round": self.round,
            "option_a": self.option_a,
            "option_b": self.option_b,
            "winner": self.winner,
            "tally": list(self.tally),
            "path": self.path,
            "abstentions": list(self.abstentions),
            "decisions": [
                {
                    "agent": d.agent,
                    "choice": d.choice,
                    "confidence": round(d.confidence, 12),
                    "citations": list(d.citations),
                }
                for d in self.decisions
            ],
        }


def majority_vote(
    decisions: Sequence[AgentDecision], id_a: str, id_b: str
) -> tuple[Choice, tuple[int, int], TieBreak]:
    """Majority of choices, then larger confidence sum, then smaller canonical id."""
    n_a = sum(1 for d in decisions if d.choice == "A")
    n_b = len(decisions) - n_a
    if n_a != n_b:
        return ("A" if n_a > n_b else "B"), (n_a, n_b), "majority"
    sum_a = round(math.fsum(d.confidence for d in decisions if d.choice == "A"), 12)
    sum_b = round(math.fsum(d.confidence for d in decisions if d.choice == "B"), 12)
    if sum_a != sum_b:
        return ("A" if sum_a > sum_b else "B"), (n_a, n_b), "confidence-sum"
    return ("A" if id_a <= id_b else "B"), (n_a, n_b), "canonical-id"


def _summary(decision: AgentDecision, u: int) -> str:
    stage = "initial" if u == 0 else f"micro-round {u}"
    return f"[{stage}] {decision.rationale or decision.agent + ' chose ' + decision.choice}"


def debate_match(
    match_id: str,
    option_a: Candidate,
    option_b: Candidate,
    panel: Mapping[str, JudgeBackend],
    context: JudgeContext,
    micro_rounds: int,
    *,
    policy: WarningPolicy | None = None,
) -> tuple[MatchOutcome, list[Post]]:
    """Run one facilitated match; returns the outcome and the match's board segment.

    Agents speak in Full, Cat, Sol, Rea order. Each drafts an initial assessment,
    then refines for ``micro_rounds`` rounds after reading the others' latest posts.
    A backend failure removes that agent from the match as an abstention.
    """
    roles = [role for role in AGENT_ORDER if role in panel]
    posts: list[Post] = []
    drafts: dict[str, AgentDecision] = {}
    abstained: list[str] = []

    def request(role: str) -> JudgeRequest:
        return JudgeRequest(match_id, role, option_a, option_b, context)

    def publish(role: str, decision: AgentDecision, u: int) -> None:
        posts.append(
            Post(
                match_id=match_id,
                agent=role,
                micro_round=u,
                choice=decision.choice,
                confidence=decision.confidence,
                summary=_summary(decision, u),
                citations=decision.citations,
                tools=decision.tools,
            )
        )

    def abstain(role: str, error: BackendUnavailable) -> None:
        abstained.append(role)
        drafts.pop(role, None)
        emit_warning("W03", f"{match_id}/{role}: {error}", policy=policy)

    for role in roles:
        try:
            drafts[role] = panel[role].init_assess(request(role))
        except BackendUnavailable as e:
            abstain(role, e)
            continue
        publish(role, drafts[role], 0)

    for u in range(micro_rounds):
        for role in roles:
            if role not in drafts:
                continue
            latest = {p.agent: p for p in posts if p.agent != role}
            peers = [latest[r] for r in roles if r in latest]
            try:
                drafts[role] = panel[role].refine(request(role), drafts[role], peers, u)
            except BackendUnavailable as e:
                abstain(role, e)
                continue
            publish(role, drafts[role], u + 1)

    decisions = tuple(drafts[role] for role in roles if role in drafts)
    if decisions:
        winner, tally, path = majority_vote(decisions, option_a.canonical_id, option_b.canonical_id)
    else:
        winner = "A" if option_a.canonical_id <= option_b.canonical_id else "B"
        tally, path = (0, 0), "canonical-id"
    outcome = MatchOutcome(
        match_id=match_id,
        option_a=option_a.canonical_id,
        option_b=option_b.canonical_id,
        decisions=decisions,
        winner=winner,
        tally=tally,
        path=path,
        abstentions=tuple(abstained),
    )
    return outcome, posts


@dataclass(frozen=True)
class RoundLog:
    round: int
    entrants: int
    byes: tuple[str, ...]
    advanced_unplayed: tuple[str, ...]
    matches: tuple[MatchOutcome, ...]

    def to_document(self) -> dict:
        return {
            "round": self.round,
            "entrants": self.entrants,
            "byes": list(self.byes),
            "advanced_unplayed": list(self.advanced_unplayed),
            "matches": [m.to_document() for m in self.matches],
        }


@dataclass(frozen=True)
class TournamentResult:
    """Survivors in final order plus the complete bracket."""

    survivors: tuple[Candidate, ...]
    rounds: tuple[RoundLog, ...]
    wins: dict[str, int]
    k: int
    seed: int

    @property
    def total_rounds(self) -> int:
        return len(self.rounds)

    def depth(self, canonical_id: str) -> float:
        """Rounds cleared over rounds played.

        Survivors cleared every round whether they won or sat out on a bye; a
        candidate knocked out in round ``r`` cleared ``r - 1``. Ids that never
        entered score 0.0, and a pool that needed no round scores 1.0.
        """
        if not self.rounds:
            return 1.0
        if any(c.canonical_id == canonical_id for c in self.survivors):
            return 1.0
        for log in self.rounds:
            if any(m.loser_id == canonical_id for m in log.matches):
                return (log.round - 1) / self.total_rounds
        return 0.0

    def matches(self) -> list[MatchOutcome]:
        return [m for r in self.rounds for m in r.matches]

    def to_document(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "total_rounds": self.total_rounds,
            "survivors": [c.canonical_id for c in self.survivors],
            "rounds": [r.to_document() for r in self.rounds],
        }


def tournament(
    pool: CandidatePool,
    panel: Mapping[str, JudgeBackend],
    context: JudgeContext,
    *,
    k: int = 50,
    seed: int = 0,
    micro_rounds: int = 2,
    board: MemoryBoard | None = None,
    workers: int = 1,
    policy: WarningPolicy | None = None,
) -> TournamentResult:
    """Seeded knockout from the pool down to exactly ``k`` survivors.

    Pool position is the priority order. An odd round gives the highest-priority
    survivor a bye. When a full round would leave fewer than ``k``, only the
    ``2 * (n - k)`` lowest-priority survivors play and the rest advance. Survivors
    are ordered by wins, then priority.

    Raises:
        PoolTooSmall: If the pool has fewer than ``k`` candidates.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(pool) < k:
        raise PoolTooSmall(f"pool holds {len(pool)} candidate(s), tournament needs {k}")
    board = board if board is not None else MemoryBoard()
    rank = {c.canonical_id: i for i, c in enumerate(pool.candidates)}
    rng = np.random.default_rng(seed)
    alive = list(pool.candidates)
    wins = {c.canonical_id: 0 for c in alive}
    rounds: list[RoundLog] = []

    while len(alive) > k:
        number = len(rounds) + 1
        n = len(alive)
        byes: list[Candidate] = []
        if (n + 1) // 2 >= k:
            players = list(alive)
            if n % 2:
                byes = [players.pop(0)]
            advanced: list[Candidate] = []
        else:
            split = n - 2 * (n - k)
            advanced, players = alive[:split], alive[split:]

        order = rng.permutation(len(players))
        shuffled = [players[i] for i in order]
        pairs = [(shuffled[i], shuffled[i + 1]) for i in range(0, len(shuffled), 2)]
        board.log(
            f"round {number}: {n} entrants, {len(pairs)} matches, "
            f"{len(byes)} bye(s), {len(advanced)} advance unplayed"
        )

        def play(args: tuple[int, tuple[Candidate, Candidate]]) -> tuple[MatchOutcome, list[Post]]:
            index, (a, b) = args
            return debate_match(
                f"r{number}-m{index}", a, b, panel, context, micro_rounds, policy=policy
            )

        jobs = list(enumerate(pairs))
        if workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                results = list(executor.map(play, jobs))
        else:
            results = [play(job) for job in jobs]

        outcomes: list[MatchOutcome] = []
        winners: list[Candidate] = []
        by_id = {c.canonical_id: c for c in players}
        for outcome, posts in results:
            outcome = replace(outcome, round=number)
            board.extend(outcome.match_id, posts)
            outcomes.append(outcome)
            wins[outcome.winner_id] += 1
            winners.append(by_id[outcome.winner_id])

        alive = sorted([*advanced, *byes, *winners], key=lambda c: rank[c.canonical_id])
        rounds.append(
            RoundLog(
                round=number,
                entrants=n,
                byes=tuple(c.canonical_id for c in byes),
                advanced_unplayed=tuple(c.canonical_id for c in advanced),
                matches=tuple(outcomes),
            )
        )
        logger.debug("tournament round %d: %d -> %d", number, n, len(alive))

    survivors = sorted(alive, key=lambda c: (-wins[c.canonical_id], rank[c.canonical_id]))
    return TournamentResult(
        survivors=tuple(survivors), rounds=tuple(rounds), wins=wins, k=k, seed=seed
    )


def global_rank(
    pool: CandidatePool, roles: Sequence[str], context: JudgeContext, k: int
) -> TournamentResult:
    """Rank the whole pool by the panel's mean heuristic score and keep the top ``k``."""
    if len(pool) < k:
        raise PoolTooSmall(f"pool holds {len(pool)} candidate(s), ranking needs {k}")
    judges = [HeuristicJudge(role) for role in roles]
    scored = [
        (math.fsum(j.option_score(c, context.signals) for j in judges) / len(judges), c)
        for c in pool.candidates
    ]
    scored.sort(key=lambda item: (-round(item[0], 12), item[1].canonical_id))
    survivors = tuple(c for _, c in scored[:k])
    return TournamentResult(
        survivors=survivors, rounds=(), wins={c.canonical_id: 0 for c in survivors}, k=k, seed=0
    )


def trace_events(posts: Sequence[Post]) -> list[ToolCall]:
    """Tool calls of a match segment in turn order.

    A post carries its agent's cumulative trace, so only each agent's latest post counts.
    """
    latest = {post.agent: post for post in posts}
    return [tool for role in AGENT_ORDER if role in latest for tool in latest[role].tools]


def audit_bracket(pool: CandidatePool, result: TournamentResult) -> list[str]:
    """Problems found when replaying the bracket; an empty list means it is complete."""
    problems: list[str] = []
    alive = set(pool.ids)
    for log in result.rounds:
        if log.entrants != len(alive):
            problems.append(f"round {log.round}: {log.entrants} entrants, expected {len(alive)}")
        played = {m.option_a for m in log.matches} | {m.option_b for m in log.matches}
        accounted = played | set(log.byes) | set(log.advanced_unplayed)
        if accounted != alive:
            problems.append(f"round {log.round}: entrants not all accounted for")
        alive -= {m.loser_id for m in log.matches}
    if alive != {c.canonical_id for c in result.survivors}:
        problems.append("survivors do not match the bracket")
    return problems

