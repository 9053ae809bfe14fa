"""Hierarchical reward and a group-relative clipped policy objective on a toy policy."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rxncond.errors import GroupTooSmall, ShapeMismatch
from rxncond.memory import write_json, write_text_atomic
from rxncond.transcript import check_format

logger = logging.getLogger(__name__)

TOOL_BONUS = 0.1
ADVANTAGE_FLOOR = 1e-8
VOCABULARY: tuple[str, ...] = ("search", "memory", "A", "B")
_MAX_BACKTRACKS = 30


@dataclass(frozen=True)
class RewardInput:
    format_ok: bool
    acc: int
    used_search: bool
    used_memory: bool


def reward(r: RewardInput) -> float:
    """-1 for a malformed transcript, 0 for a wrong answer, else acc plus the tool bonus."""
    if not r.format_ok:
        return -1.0
    if r.acc == 0:
        return 0.0
    return r.acc + (TOOL_BONUS if r.used_search and r.used_memory else 0.0)


def reward_input(transcript: str, correct: str) -> RewardInput:
    """Derive reward flags from a transcript; accuracy means matching ``correct``."""
    checked = check_format(transcript)
    return RewardInput(
        format_ok=checked.format_ok,
        acc=int(checked.format_ok and checked.judgement == correct),
        used_search=checked.used_search,
        used_memory=checked.used_memory,
    )


def group_advantages(rewards: Sequence[float]) -> np.ndarray:
    """(R - mean) / (std + 1e-8) within one rollout group.

    Raises:
        GroupTooSmall: For fewer than two rewards.
    """
    values = np.asarray(rewards, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] < 2:
        raise GroupTooSmall(f"advantage normalization needs G >= 2, got {values.size}")
    return (values - values.mean()) / (values.std() + ADVANTAGE_FLOOR)


# --- toy policy ----------------------------------------------------------------


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(frozen=True, eq=False)
class ToyPolicy:
    """Independent softmax over a small vocabulary at each of ``horizon`` steps."""

    logits: np.ndarray
    vocabulary: tuple[str, ...] = VOCABULARY

    def __post_init__(self) -> None:
        if self.logits.ndim != 2 or self.logits.shape[1] != len(self.vocabulary):
            raise ShapeMismatch(
                f"logits shape {self.logits.shape} does not match vocabulary of "
                f"{len(self.vocabulary)}"
            )

    @classmethod
    def uniform(cls, horizon: int, vocabulary: tuple[str, ...] = VOCABULARY) -> ToyPolicy:
        return cls(np.zeros((horizon, len(vocabulary))), vocabulary)

    @property
    def horizon(self) -> int:
        return int(self.logits.shape[0])

    def probs(self) -> np.ndarray:
        return _softmax(self.logits)

    def log_probs(self) -> np.ndarray:
        return _log_softmax(self.logits)

    def sequence_log_probs(self, actions: np.ndarray) -> np.ndarray:
        """Per-token log-probabilities of an (G, T) action array."""
        steps = np.arange(self.horizon)
        return self.log_probs()[steps[None, :], actions]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        cumulative = np.cumsum(self.probs(), axis=1)
        draws = rng.random((count, self.horizon))
        actions = (draws[:, :, None] < cumulative[None, :, :]).argmax(axis=2)
        return actions.astype(np.int64)

    def with_logits(self, logits: np.ndarray) -> ToyPolicy:
        return ToyPolicy(np.array(logits, dtype=np.float64), self.vocabulary)

    def to_document(self) -> dict:
        return {"vocabulary": list(self.vocabulary), "logits": self.logits.tolist()}

    @classmethod
    def from_document(cls, data: dict) -> ToyPolicy:
        return cls(np.array(data["logits"], dtype=np.float64), tuple(data["vocabulary"]))


def total_variation(p: ToyPolicy, q: ToyPolicy) -> float:
    """Largest per-step total-variation distance between two policies."""
    return float(0.5 * np.abs(p.probs() - q.probs()).sum(axis=1).max())


# --- objective -------------------------------------------------------------------


@dataclass(frozen=True)
class RolloutGroup:
    """G sampled sequences for one task with their sampling-time log-probabilities."""

    actions: np.ndarray
    rewards: np.ndarray
    old_log_probs: np.ndarray
    transcripts: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return int(self.actions.shape[0])

    def advantages(self) -> np.ndarray:
        return group_advantages(self.rewards)


def grpo_objective(
    policy: ToyPolicy,
    group: RolloutGroup,
    reference: ToyPolicy,
    epsilon: float,
    beta: float,
    advantages: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Clipped group-relative surrogate minus ``beta`` times the exact token-wise KL.

    Returns the objective and its analytic gradient with respect to ``policy.logits``.
    ``advantages`` defaults to the group-normalized rewards, broadcast over tokens.

    Raises:
        ShapeMismatch: If actions, log-probabilities, rewards and policies disagree.
    """
    if epsilon <= 0 or beta < 0:
        raise ValueError("epsilon must be positive and beta non-negative")
    g, t = group.actions.shape if group.actions.ndim == 2 else (0, 0)
    if (
        group.actions.ndim != 2
        or g == 0
        or t != policy.horizon
        or group.old_log_probs.shape != group.actions.shape
        or reference.logits.shape != policy.logits.shape
    ):
        raise ShapeMismatch("rollout arrays and policy shapes are inconsistent")
    adv = group.advantages() if advantages is None else np.asarray(advantages, dtype=np.float64)
    if adv.shape != (g,):
        raise ShapeMismatch(f"expected {g} advantages, got shape {adv.shape}")

    p = policy.probs()
    log_p = policy.log_probs()
    log_q = reference.log_probs()
    new_lp = policy.sequence_log_probs(group.actions)
    ratio = np.exp(new_lp - group.old_log_probs)
    a = adv[:, None]
    unclipped = ratio * a
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * a
    surrogate = np.minimum(unclipped, clipped)

    kl_steps = (p * (log_p - log_q)).sum(axis=1)
    objective = float(surrogate.mean() - beta * kl_steps.mean())

    # The gradient flows only where the unclipped branch is the minimum.
    active = (unclipped <= clipped) & (a != 0)
    weight = np.where(active, unclipped, 0.0) / (g * t)
    grad = np.zeros_like(policy.logits)
    for step in range(t):
        for i in range(g):
            if weight[i, step] == 0.0:
                continue
            grad[step] -= weight[i, step] * p[step]
            grad[step, group.actions[i, step]] += weight[i, step]
    kl_grad = p * ((log_p - log_q) - kl_steps[:, None])
    grad -= beta * kl_grad / t
    return objective, grad


# --- environment and loop ----------------------------------------------------------


@dataclass(frozen=True)
class ScriptedJudgmentEnv:
    """Pairwise-judgment tasks with a scripted correct answer per task."""

    answers: tuple[str, ...] = ("A",)

    def task(self, step: int) -> str:
        return self.answers[step % len(self.answers)]

    def render(self, policy: ToyPolicy, actions: np.ndarray) -> str:
        """Reasoning tokens become tool spans or remarks; the last token is the judgement."""
        parts = []
        tokens = [policy.vocabulary[i] for i in actions]
        for token in tokens[:-1]:
            if token in ("search", "memory"):
                parts.append(f"<{token}>lookup</{token}>")
            else:
                parts.append(f"Leaning towards {token}.")
        last = tokens[-1]
        if last in ("A", "B"):
            parts.append(f"Judgement: {last}")
        else:
            parts.append(f"<{last}>lookup</{last}>")
        return "\n".join(parts)


@dataclass
class TrainingResult:
    policy: ToyPolicy
    mean_rewards: list[float] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)

    def curve_text(self) -> str:
        return "".join(f"{step}\t{value!r}\n" for step, value in enumerate(self.mean_rewards))


def sample_group(
    policy: ToyPolicy, env: ScriptedJudgmentEnv, step: int, size: int, rng: np.random.Generator
) -> RolloutGroup:
    actions = policy.sample(rng, size)
    transcripts = tuple(env.render(policy, row) for row in actions)
    correct = env.task(step)
    rewards = np.array([reward(reward_input(text, correct)) for text in transcripts])
    return RolloutGroup(
        actions=actions,
        rewards=rewards,
        old_log_probs=policy.sequence_log_probs(actions),
        transcripts=transcripts,
    )


def toy_training_loop(
    policy: ToyPolicy,
    env: ScriptedJudgmentEnv,
    *,
    steps: int,
    group_size: int,
    epsilon: float,
    beta: float,
    learning_rate: float = 0.5,
    seed: int = 0,
    reference: ToyPolicy | None = None,
) -> TrainingResult:
    """Sample a group, score it, normalize advantages, then take one ascent step.

    Each step backtracks the step size until the objective on the sampled group does
    not decrease. The reference policy defaults to the starting policy.
    """
    if group_size < 2:
        raise GroupTooSmall(f"group size must be at least 2, got {group_size}")
    reference = reference or policy
    rng = np.random.default_rng(seed)
    result = TrainingResult(policy=policy)
    current = policy
    for step in range(steps):
        group = sample_group(current, env, step, group_size, rng)
        advantages = group.advantages()
        value, grad = grpo_objective(current, group, reference, epsilon, beta, advantages)
        eta = learning_rate
        candidate = current
        for _ in range(_MAX_BACKTRACKS):
            trial = current.with_logits(current.logits + eta * grad)
            trial_value, _ = grpo_objective(trial, group, reference, epsilon, beta, advantages)
            if trial_value >= value:
                candidate = trial
                break
            eta /= 2.0
        current = candidate
        result.mean_rewards.append(float(group.rewards.mean()))
        result.objectives.append(value)
        logger.debug(
            "step %d: mean reward %.4f objective %.6f", step, result.mean_rewards[-1], value
        )
    result.policy = current
    return result


def save_policy(policy: ToyPolicy, path: Path) -> None:
    write_json(path, policy.to_document())


def write_curve(result: TrainingResult, path: Path) -> None:
    write_text_atomic(path, result.curve_text())
