"""Mechanistic analysis of a query reaction into a ReactionReport."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from rxncond.balance import (
    ByProductHypothesis,
    LeavingGroup,
    Stoichiometry,
    balance_stoichiometry,
    derive_atom_map,
    enumerate_byproducts,
    format_equation,
)
from rxncond.config import PipelineConfig
from rxncond.errors import BalanceError, EmptyBase, NegativeDifference, Unbalanceable
from rxncond.knowbase import Evidence, Keywords, ReactionBase
from rxncond.models import (
    AtomMapDoc,
    ByProductTermDoc,
    HitDoc,
    HypothesisDoc,
    MainFGDoc,
    Reaction,
    ReactionReport,
    SignalDoc,
    StoichiometryDoc,
)
from rxncond.molgraph import Molecule
from rxncond.tagger import FGLibrary, rank_salience, tag_reactants
from rxncond.warning_policy import DiagnosticSink, WarningPolicy, emit_warning

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Analysis:
    """A report plus the neighbour evidence gathered while classifying."""

    report: ReactionReport
    evidence: Evidence


def keywords_from_report(report: ReactionReport) -> Keywords:
    return Keywords(
        reaction_type=report.reaction_type,
        main_fgs=tuple(report.main_fg_names),
        byproducts=tuple(report.byproduct_species()),
    )


def _hypothesis_doc(h: ByProductHypothesis) -> HypothesisDoc:
    return HypothesisDoc(
        rule=h.rule,
        atoms=h.atoms,
        species_count=h.species_count,
        terms=[ByProductTermDoc(name=t.name, smiles=t.smiles, count=t.count) for t in h.terms],
        residue=dict(h.residue),
    )


def _stoichiometry_doc(s: Stoichiometry) -> StoichiometryDoc:
    return StoichiometryDoc(
        reactants=list(s.reactants), products=list(s.products), aux=dict(s.aux)
    )


def _balance(
    reactants: list[Molecule],
    products: list[Molecule],
    hypotheses: list[ByProductHypothesis],
) -> Stoichiometry | None:
    try:
        return balance_stoichiometry(reactants, products)
    except Unbalanceable:
        pass
    if hypotheses and hypotheses[0].explained:
        try:
            return balance_stoichiometry(reactants, products, hypotheses[0].molecules())
        except Unbalanceable:
            return None
    return None


def analyze_reaction(
    reaction: Reaction,
    base: ReactionBase,
    library: FGLibrary,
    leaving_groups: tuple[LeavingGroup, ...],
    config: PipelineConfig,
    *,
    policy: WarningPolicy | None = None,
) -> Analysis:
    """Tag, balance, map and classify one reaction.

    SMILES errors propagate with their character positions. An empty base leaves
    the type as ``unknown`` with confidence 0.
    """
    sink = DiagnosticSink()
    reactants = reaction.reactant_molecules()
    products = reaction.product_molecules()
    for m in [*reactants, *products]:
        if m.annotations_ignored:
            emit_warning("W01", f"{m.smiles}: stereo/isotope ignored", policy=policy, sink=sink)

    hits = tag_reactants(reactants, library)
    ranked = rank_salience(hits, library, config.salience_weights())
    main = () if config.has_ablation("no_main_fg") else ranked.main
    main_docs = [
        MainFGDoc(
            name=r.name,
            role=library.role_of(r.name),
            score=round(r.score, 12),
            hits=[HitDoc(molecule=h.molecule, atoms=list(h.atoms)) for h in r.hits],
        )
        for r in main
    ]

    hypotheses: list[ByProductHypothesis] = []
    byproduct_analysis = not config.has_ablation("no_byproduct")
    if byproduct_analysis and products:
        try:
            hypotheses = enumerate_byproducts(reactants, products, leaving_groups)
        except NegativeDifference as e:
            logger.debug("no by-product hypotheses: %s", e)
    stoichiometry: Stoichiometry | None = None
    equation = ""
    if products:
        try:
            stoichiometry = _balance(reactants, products, hypotheses)
        except BalanceError:
            stoichiometry = None
        if stoichiometry is None:
            emit_warning("W05", reaction.to_smiles(), policy=policy, sink=sink)
        else:
            equation = format_equation(reactants, products, stoichiometry)

    atom_map: AtomMapDoc | None = None
    if products:
        mapped = derive_atom_map(reactants, products, cap=config.mcs_cap, budget=config.mcs_budget)
        if mapped.approximate:
            emit_warning("W04", "atom mapping is approximate", policy=policy, sink=sink)
        atom_map = AtomMapDoc(
            mapped_pairs=len(mapped.pairs),
            unmapped_reactant_atoms=[list(p) for p in mapped.unmapped_reactant],
            unmapped_product_atoms=[list(p) for p in mapped.unmapped_product],
            unmapped_hydrogens=mapped.unmapped_hydrogens,
            approximate=mapped.approximate,
        )

    try:
        label, confidence, evidence = base.classify_reaction_type(
            reactants, products, k=config.type_vote_k
        )
    except EmptyBase:
        label, confidence, evidence = "unknown", 0.0, Evidence()
    if config.has_ablation("no_reaction_type"):
        label, confidence = "unknown", 0.0

    report = ReactionReport(
        reaction=reaction,
        main_fgs=main_docs,
        all_fgs=[r.name for r in ranked.entries],
        stoichiometry=_stoichiometry_doc(stoichiometry) if stoichiometry else None,
        balanced_equation=equation,
        byproduct=hypotheses[0].rule if hypotheses and hypotheses[0].explained else "",
        hypotheses=[_hypothesis_doc(h) for h in hypotheses],
        atom_map=atom_map,
        reaction_type=label,
        type_confidence=round(confidence, 12),
        citations=evidence.record_ids,
        byproduct_analysis=byproduct_analysis,
    )
    signals = base.signal_features(keywords_from_report(report), evidence)
    report = report.model_copy(
        update={
            "signals": SignalDoc(
                s_type=signals.s_type,
                s_role=signals.s_role,
                s_byprod=signals.s_byprod,
                s_cond=signals.s_cond,
            ),
            "diagnostics": [f"{code}: {message}" for code, message in sink.entries],
        }
    )
    logger.debug("report for %s: type=%s", reaction.to_smiles(), label)
    return Analysis(report=report, evidence=evidence)

