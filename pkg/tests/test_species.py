"""Tests for the species dictionary and condition models."""

import pytest
from pydantic import ValidationError

from rxncond.errors import LibraryError, UnreadableSource
from rxncond.models import ConditionConfig, Reaction, ReactionRecord
from rxncond.species import load_species, parse_species


class TestSpeciesDictionary:
    def test_synonyms_are_case_insensitive(self, species):
        assert species.canonical("dichloromethane") == "DCM"
        assert species.canonical("  Triethylamine ") == "TEA"
        assert species.canonical("et3n") == "TEA"

    def test_unknown_names_pass_through(self, species):
        assert species.canonical(" mystery salt ") == "mystery salt"
        assert species.entry("mystery salt") is None
        assert species.roles("mystery salt") == frozenset()

    def test_empty_name(self, species):
        assert species.canonical("   ") == ""

    def test_roles_and_smiles(self, species):
        assert species.has_role("pyridine", "base")
        assert species.has_role("py", "solvent")
        assert species.smiles("methanol") == "CO"
        assert species.smiles("K2CO3") is None

    def test_contains(self, species):
        assert "Hunig's base" in species
        assert "unobtainium" not in species

    def test_canonical_config(self, species):
        config = ConditionConfig(solvent1="dichloromethane", reagent1="Et3N")
        assert species.canonical_config(config) == ConditionConfig(solvent1="DCM", reagent1="TEA")

    def test_duplicate_synonym_rejected(self):
        text = "species:\n  - {name: A, synonyms: [x]}\n  - {name: B, synonyms: [X]}\n"
        with pytest.raises(LibraryError, match="claimed by both"):
            parse_species(text)

    def test_duplicate_name_rejected(self):
        with pytest.raises(LibraryError, match="Duplicate"):
            parse_species("species:\n  - {name: A}\n  - {name: A}\n")

    def test_unknown_field_rejected(self):
        with pytest.raises(LibraryError, match="schema"):
            parse_species("species:\n  - {name: A, colour: red}\n")

    def test_not_a_mapping(self):
        with pytest.raises(LibraryError):
            parse_species("- just a list\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(UnreadableSource):
            load_species(tmp_path / "none.yaml")


class TestConditionConfig:
    def test_slots_and_id(self):
        config = ConditionConfig(catalyst1="Pd/C", solvent1="MeOH")
        assert config.slots() == ("Pd/C", "MeOH", "", "", "")
        assert config.canonical_id == "Pd/C|MeOH|||"
        assert config.species() == ["Pd/C", "MeOH"]

    def test_values_are_stripped_and_none_is_empty(self):
        config = ConditionConfig(solvent1="  DMF ", reagent1=None)
        assert config.solvent1 == "DMF"
        assert config.reagent1 == ""

    def test_from_slots(self):
        config = ConditionConfig.from_slots(["", "THF", "", "LiOH", ""])
        assert config.reagent1 == "LiOH"
        with pytest.raises(ValueError):
            ConditionConfig.from_slots(["THF"])

    def test_frozen_and_hashable(self):
        config = ConditionConfig(solvent1="DCM")
        assert {config, ConditionConfig(solvent1="DCM")} == {config}
        with pytest.raises(ValidationError):
            config.solvent1 = "THF"

    def test_with_slot(self):
        config = ConditionConfig(solvent1="DCM").with_slot("reagent1", "TEA")
        assert config.species() == ["DCM", "TEA"]

    def test_is_empty(self):
        assert ConditionConfig().is_empty()


class TestReaction:
    def test_parse(self):
        reaction = Reaction.parse("CC(=O)Cl.NC>>CC(=O)NC")
        assert reaction.reactants == ("CC(=O)Cl", "NC")
        assert reaction.products == ("CC(=O)NC",)
        assert reaction.to_smiles() == "CC(=O)Cl.NC>>CC(=O)NC"

    def test_agent_section_ignored(self):
        assert Reaction.parse("CCO>O>CC=O").reactants == ("CCO",)

    def test_missing_separator(self):
        with pytest.raises(ValueError):
            Reaction.parse("CCO")

    def test_record_requires_a_condition(self):
        with pytest.raises(ValidationError):
            ReactionRecord(id="r", reaction_type="x", reactants=["C"], products=["C"])

    def test_record_condition(self):
        record = ReactionRecord(
            id="r", reaction_type="x", reactants=["C"], products=["C"], solvent1="DCM"
        )
        assert record.condition == ConditionConfig(solvent1="DCM")
        assert record.reaction.reactants == ("C",)
