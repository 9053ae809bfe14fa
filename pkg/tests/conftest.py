"""Shared test fixtures for the rxncond test suite."""

import warnings
from pathlib import Path

import pytest

from rxncond.analysis import analyze_reaction, keywords_from_report
from rxncond.balance import load_leaving_groups
from rxncond.config import PipelineConfig
from rxncond.judges import JudgeContext
from rxncond.knowbase import ingest
from rxncond.models import Reaction
from rxncond.species import load_species
from rxncond.tagger import load_library

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_addoption(parser):
    parser.addoption(
        "--update-goldens",
        action="store_true",
        default=False,
        help="Rewrite tests/goldens from the current output instead of comparing.",
    )


@pytest.fixture
def update_goldens(request):
    return request.config.getoption("--update-goldens")


@pytest.fixture(scope="session")
def library():
    return load_library()


@pytest.fixture(scope="session")
def species():
    return load_species()


@pytest.fixture(scope="session")
def leaving_groups():
    return load_leaving_groups()


@pytest.fixture(scope="session")
def bundled_base(library, species, leaving_groups):
    """The bundled 500-record corpus, ingested once per session."""
    base, report = ingest(library=library, species=species, leaving_groups=leaving_groups)
    assert report.skipped == 0
    return base


@pytest.fixture
def small_config():
    """Knobs scaled down so the full pipeline runs quickly on the bundled corpus."""
    return PipelineConfig().with_overrides(
        k_per_channel=16,
        pool_cap=60,
        tournament_k=6,
        k_out=2,
        delta=0.0,
        micro_rounds=1,
        type_vote_k=5,
        variant_cap=2,
        alternatives_per_slot=1,
    )


@pytest.fixture
def amide_reaction():
    return "CC(=O)Cl.NCC>>CC(=O)NCC"


@pytest.fixture
def test_set_path():
    return FIXTURES / "test_set.jsonl"


@pytest.fixture
def mini_corpus_lines():
    """Four well-formed records across two reaction types."""
    return [
        '{"id": "a1", "reaction_type": "amide_coupling", "reactants": ["CC(=O)Cl", "NC"], '
        '"products": ["CC(=O)NC"], "solvent1": "dichloromethane", "reagent1": "Et3N"}',
        '{"id": "a2", "reaction_type": "amide_coupling", "reactants": ["CCC(=O)Cl", "NCC"], '
        '"products": ["CCC(=O)NCC"], "solvent1": "DCM", "reagent1": "DIPEA"}',
        '{"id": "e1", "reaction_type": "fischer_esterification", "reactants": ["CC(=O)O", "OC"], '
        '"products": ["CC(=O)OC", "O"], "solvent1": "toluene", "reagent1": "H2SO4"}',
        '{"id": "e2", "reaction_type": "fischer_esterification", "reactants": ["CCC(=O)O", "OCC"], '
        '"products": ["CCC(=O)OCC", "O"], "solvent1": "toluene", "reagent1": "TsOH"}',
    ]


@pytest.fixture
def mini_base(mini_corpus_lines, library, species, leaving_groups):
    base, _ = ingest(
        mini_corpus_lines, library=library, species=species, leaving_groups=leaving_groups
    )
    return base


@pytest.fixture
def amide_context(mini_base, library, species, leaving_groups, amide_reaction):
    """Judge context for the amide query against the mini corpus."""
    reaction = Reaction.parse(amide_reaction)
    config = PipelineConfig()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        analysis = analyze_reaction(reaction, mini_base, library, leaving_groups, config)
    signals = mini_base.signal_features(keywords_from_report(analysis.report), analysis.evidence)
    return JudgeContext(
        reaction=reaction,
        report=analysis.report,
        base=mini_base,
        species=species,
        config=config,
        evidence=analysis.evidence,
        signals=signals,
    )
