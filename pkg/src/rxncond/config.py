"""Pipeline configuration: a validated pydantic model loaded from YAML."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from rxncond.errors import ConfigError
from rxncond.models import AGENT_ORDER
from rxncond.tagger import SalienceWeights

ABLATIONS: tuple[str, ...] = (
    "no_main_fg",
    "no_byproduct",
    "no_reaction_type",
    "no_debate",
    "no_multistep",
    "no_pairing",
)

Ablation = Literal[
    "no_main_fg", "no_byproduct", "no_reaction_type", "no_debate", "no_multistep", "no_pairing"
]


class FacetWeights(BaseModel):
    """Combination weights for the similarity facets used by recall."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    fg: float = Field(default=0.4, ge=0.0, le=1.0)
    mcs: float = Field(default=0.3, ge=0.0, le=1.0)
    fingerprint: float = Field(default=0.3, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _sum_to_one(self) -> FacetWeights:
        if abs(self.fg + self.mcs + self.fingerprint - 1.0) > 1e-9:
            raise ValueError("facet weights must sum to 1")
        return self


class AlignWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    type: float = Field(default=0.35, ge=0.0, le=1.0)
    fg: float = Field(default=0.25, ge=0.0, le=1.0)
    mcs: float = Field(default=0.2, ge=0.0, le=1.0)
    fingerprint: float = Field(default=0.2, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _sum_to_one(self) -> AlignWeights:
        if abs(self.type + self.fg + self.mcs + self.fingerprint - 1.0) > 1e-9:
            raise ValueError("align weights must sum to 1")
        return self


class RoleWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    electrophile: float = Field(default=0.5, ge=0.0)
    nucleophile: float = Field(default=0.4, ge=0.0)
    neutral: float = Field(default=0.1, ge=0.0)


class PipelineConfig(BaseModel):
    """Every tunable knob of the pipeline, with documented ranges."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    base_path: Path | None = None
    fg_library_path: Path | None = None
    leaving_groups_path: Path | None = None
    species_path: Path | None = None

    k_per_channel: int = Field(default=64, ge=1)
    pool_cap: int = Field(default=5000, ge=1)
    tournament_k: int = Field(default=50, ge=1)
    k_out: int = Field(default=10, ge=1)
    delta: float = Field(default=0.5, ge=0.0, le=1.0)
    lambda_div: float = Field(default=0.3, ge=0.0)
    micro_rounds: int = Field(default=2, ge=0, le=10)
    uncertainty_threshold: float = Field(default=0.65, ge=0.0, le=1.0)
    neutral_prior: float = Field(default=0.5, ge=0.0, le=1.0)

    w_act: float = Field(default=1.0, ge=0.0)
    w_role: RoleWeights = Field(default_factory=RoleWeights)
    w_freq: float = Field(default=0.2, ge=0.0)
    top_n: int = Field(default=4, ge=1)

    facet_weights: FacetWeights = Field(default_factory=FacetWeights)
    align_weights: AlignWeights = Field(default_factory=AlignWeights)

    variant_cap: int = Field(default=8, ge=0)
    alternatives_per_slot: int = Field(default=3, ge=0)
    feasibility_filter: bool = True
    mcs_cap: int = Field(default=24, ge=1)
    mcs_budget: int = Field(default=1_000_000, ge=1)
    similarity_mcs_budget: int = Field(default=20_000, ge=1)
    type_vote_k: int = Field(default=5, ge=1)

    epsilon: float = Field(default=0.2, gt=0.0)
    beta: float = Field(default=0.04, ge=0.0)
    group_size: int = Field(default=8, ge=2)
    learning_rate: float = Field(default=0.5, gt=0.0)
    horizon: int = Field(default=3, ge=1)
    train_steps: int = Field(default=200, ge=0)

    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    remote_timeout: float = Field(default=30.0, gt=0.0)
    judges: dict[str, str] = Field(default_factory=dict)
    panel: tuple[str, ...] = AGENT_ORDER
    ablations: tuple[Ablation, ...] = ()

    @field_validator("judges")
    @classmethod
    def _check_judges(cls, value: dict[str, str]) -> dict[str, str]:
        for role, backend in value.items():
            if role not in AGENT_ORDER:
                raise ValueError(f"unknown agent role {role!r}")
            kind, _, target = backend.partition(":")
            if kind == "heuristic" and not target:
                continue
            if kind in ("replay", "remote") and target:
                continue
            raise ValueError(f"judge for {role} must be heuristic, replay:<path> or remote:<url>")
        return value

    @field_validator("panel")
    @classmethod
    def _check_panel(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        if not value:
            raise ValueError("panel needs at least one agent role")
        unknown = [role for role in value if role not in AGENT_ORDER]
        if unknown:
            raise ValueError(f"unknown agent roles: {unknown}")
        if len(set(value)) != len(value):
            raise ValueError("panel roles must be distinct")
        # Turn order is fixed regardless of how the roles were listed.
        return tuple(role for role in AGENT_ORDER if role in value)

    def has_ablation(self, name: str) -> bool:
        return name in self.ablations

    def salience_weights(self) -> SalienceWeights:
        return SalienceWeights(
            w_act=self.w_act,
            w_role=self.w_role.model_dump(),
            w_freq=self.w_freq,
            top_n=self.top_n,
        )

    def judge_spec(self, role: str) -> str:
        return self.judges.get(role, "heuristic")

    def digest(self) -> str:
        """sha256 over the canonical JSON form; identical configs give identical digests."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def with_overrides(self, **overrides: Any) -> PipelineConfig:
        """Copy with the non-None overrides applied and re-validated."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return build_config(data)


def _make_yaml() -> YAML:
    yml = YAML(typ="safe")
    yml.allow_duplicate_keys = False
    return yml


def build_config(data: dict[str, Any]) -> PipelineConfig:
    """Validate a mapping into a config; the first offending key is named in the error."""
    try:
        return PipelineConfig(**data)
    except PydanticValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(first["msg"], key=key) from e


def load_config(source: Path | None = None) -> PipelineConfig:
    """Load a YAML mapping of knobs; ``None`` yields all defaults.

    Raises:
        ConfigError: On unreadable files, invalid YAML, unknown keys or out-of-range values.
    """
    if source is None:
        return PipelineConfig()
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}", key=str(source)) from e
    try:
        data = _make_yaml().load(text)
    except YAMLError as e:
        raise ConfigError(f"invalid YAML: {e}", key=str(source)) from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top-level value must be a mapping", key=str(source))
    return build_config(dict(data))
