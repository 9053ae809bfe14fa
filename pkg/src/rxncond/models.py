"""Pydantic v2 schema models for records, reports and recommendation documents."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rxncond.molgraph import Molecule
from rxncond.smiles import parse_smiles

SLOTS: tuple[str, ...] = ("catalyst1", "solvent1", "solvent2", "reagent1", "reagent2")

AgentRole = Literal["Full", "Cat", "Sol", "Rea"]
AGENT_ORDER: tuple[str, ...] = ("Full", "Cat", "Sol", "Rea")


class ConditionConfig(BaseModel):
    """Five-slot condition configuration; an empty string marks an empty slot."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    catalyst1: str = ""
    solvent1: str = ""
    solvent2: str = ""
    reagent1: str = ""
    reagent2: str = ""

    @field_validator(*SLOTS, mode="before")
    @classmethod
    def _strip(cls, value: object) -> object:
        if value is None:
            return ""
        return value.strip() if isinstance(value, str) else value

    @classmethod
    def from_slots(cls, values: tuple[str, ...] | list[str]) -> ConditionConfig:
        if len(values) != len(SLOTS):
            raise ValueError(f"expected {len(SLOTS)} slot values, got {len(values)}")
        return cls(**dict(zip(SLOTS, values, strict=True)))

    def slots(self) -> tuple[str, ...]:
        return tuple(getattr(self, slot) for slot in SLOTS)

    @property
    def canonical_id(self) -> str:
        return "|".join(self.slots())

    def species(self) -> list[str]:
        return [value for value in self.slots() if value]

    def is_empty(self) -> bool:
        return not any(self.slots())

    def with_slot(self, slot: str, value: str) -> ConditionConfig:
        return self.model_copy(update={slot: value})


class Reaction(BaseModel):
    """Reactant and product SMILES of one reaction."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    reactants: tuple[str, ...]
    products: tuple[str, ...] = ()

    @field_validator("reactants", "products", mode="before")
    @classmethod
    def _strip_all(cls, value: object) -> object:
        if isinstance(value, (list, tuple)):
            return tuple(s.strip() if isinstance(s, str) else s for s in value)
        return value

    @classmethod
    def parse(cls, text: str) -> Reaction:
        """Read reaction SMILES ``R1.R2>>P1`` (an agent section ``R>A>P`` is ignored)."""
        parts = text.strip().split(">")
        if len(parts) != 3:
            raise ValueError(f"reaction SMILES needs exactly two '>' separators: {text!r}")
        reactants = tuple(s for s in parts[0].split(".") if s)
        products = tuple(s for s in parts[2].split(".") if s)
        return cls(reactants=reactants, products=products)

    def to_smiles(self) -> str:
        return ".".join(self.reactants) + ">>" + ".".join(self.products)

    def reactant_molecules(self) -> list[Molecule]:
        return [parse_smiles(s) for s in self.reactants]

    def product_molecules(self) -> list[Molecule]:
        return [parse_smiles(s) for s in self.products]


class ReactionRecord(BaseModel):
    """One reaction-base entry as stored in the line-delimited source."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str = Field(min_length=1)
    reaction_type: str = Field(min_length=1)
    reactants: tuple[str, ...] = Field(min_length=1)
    products: tuple[str, ...] = Field(min_length=1)
    catalyst1: str = ""
    solvent1: str = ""
    solvent2: str = ""
    reagent1: str = ""
    reagent2: str = ""
    provenance: str = "source"

    @model_validator(mode="after")
    def _check_condition(self) -> ReactionRecord:
        if self.condition.is_empty():
            raise ValueError("record condition has no non-empty slot")
        return self

    @property
    def condition(self) -> ConditionConfig:
        return ConditionConfig(**{slot: getattr(self, slot) for slot in SLOTS})

    @property
    def reaction(self) -> Reaction:
        return Reaction(reactants=self.reactants, products=self.products)


# --- General Chemist report ------------------------------------------------


class HitDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    molecule: int
    atoms: list[int]


class MainFGDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    role: str
    score: float
    hits: list[HitDoc]


class StoichiometryDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    reactants: list[int]
    products: list[int]
    aux: dict[str, int] = Field(default_factory=dict)


class ByProductTermDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    smiles: str
    count: int


class HypothesisDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rule: str
    atoms: int
    species_count: int
    terms: list[ByProductTermDoc] = Field(default_factory=list)
    residue: dict[str, int] = Field(default_factory=dict)


class AtomMapDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mapped_pairs: int
    unmapped_reactant_atoms: list[list[int]]
    unmapped_product_atoms: list[list[int]]
    unmapped_hydrogens: int
    approximate: bool = False


class SignalDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    s_type: dict[str, float] = Field(default_factory=dict)
    s_role: dict[str, float] = Field(default_factory=dict)
    s_byprod: dict[str, int] = Field(default_factory=dict)
    s_cond: dict[str, dict[str, float]] = Field(default_factory=dict)


class ReactionReport(BaseModel):
    """Mechanistic summary written to the run memory before recall starts."""

    model_config = ConfigDict(extra="forbid")

    reaction: Reaction
    main_fgs: list[MainFGDoc] = Field(default_factory=list)
    all_fgs: list[str] = Field(default_factory=list)
    stoichiometry: StoichiometryDoc | None = None
    balanced_equation: str = ""
    byproduct: str = ""
    hypotheses: list[HypothesisDoc] = Field(default_factory=list)
    atom_map: AtomMapDoc | None = None
    reaction_type: str = "unknown"
    type_confidence: float = 0.0
    citations: list[str] = Field(default_factory=list)
    signals: SignalDoc = Field(default_factory=SignalDoc)
    byproduct_analysis: bool = True
    diagnostics: list[str] = Field(default_factory=list)

    @property
    def main_fg_names(self) -> list[str]:
        return [fg.name for fg in self.main_fgs]

    def byproduct_species(self) -> list[str]:
        """Names of the species in the top explained by-product hypothesis."""
        if not self.hypotheses or not self.hypotheses[0].terms:
            return []
        return [term.name for term in self.hypotheses[0].terms]


# --- recommendation documents ----------------------------------------------


class CheckDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    passed: bool
    message: str


class ClaimDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    text: str
    support: list[str]


class EvidenceDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record_id: str
    type_match: bool
    fg_overlap: float
    mcs: float
    fingerprint: float
    slot_agreement: float


class ValidityDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    constr_ok: bool
    align: float
    delta: float
    coherent_ok: bool
    valid: bool


class RationaleDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mechanism: dict[str, str | list[str]]
    checks: list[CheckDoc]
    evidence: list[EvidenceDoc]
    claims: list[ClaimDoc]


class RecommendationDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rank: int
    config: ConditionConfig
    utility: float
    validity: ValidityDoc
    rationale: RationaleDoc


class RecommendationReport(BaseModel):
    """One document per query: the reaction plus K_out certified configurations."""

    model_config = ConfigDict(extra="forbid")

    reaction: Reaction
    reaction_type: str
    k_out: int
    lambda_div: float
    objective: float
    diversity: float
    entries: list[RecommendationDoc]
