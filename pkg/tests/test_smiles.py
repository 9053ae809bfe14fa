"""Tests for SMILES reading and molecular-graph bookkeeping."""

import pytest

from rxncond.errors import (
    EmptyInput,
    SmilesError,
    UnclosedBranch,
    UnknownToken,
    UnmatchedRingClosure,
    ValenceUnderflow,
)
from rxncond.molgraph import AROMATIC, Atom, Bond, Molecule, element_counts, formula, side_counts
from rxncond.smiles import parse_many, parse_smiles


class TestParse:
    def test_ethanol(self):
        m = parse_smiles("CCO")
        assert [a.element for a in m.atoms] == ["C", "C", "O"]
        assert m.bonds == (Bond(0, 1, 1), Bond(1, 2, 1))
        assert m.implicit_h == (3, 2, 1)
        assert m.smiles == "CCO"

    def test_surrounding_whitespace_is_stripped(self):
        assert parse_smiles("  CCO \n").smiles == "CCO"

    def test_branches_and_double_bond(self):
        m = parse_smiles("CC(=O)O")
        assert m.bond_lookup[(1, 2)] == 2
        assert m.degree(1) == 3
        assert m.total_h(3) == 1

    def test_benzene_is_aromatic(self):
        m = parse_smiles("c1ccccc1")
        assert all(a.aromatic for a in m.atoms)
        assert all(b.order == AROMATIC for b in m.bonds)
        assert len(m.bonds) == 6
        assert m.implicit_h == (1,) * 6

    def test_pyridine_nitrogen_has_no_hydrogen(self):
        m = parse_smiles("c1ccncc1")
        assert m.total_h(3) == 0

    def test_percent_ring_closure(self):
        assert parse_smiles("C%10CCCCC%10") == parse_smiles("C1CCCCC1")

    def test_bracket_atom_charge_and_hydrogens(self):
        m = parse_smiles("[NH4+]")
        assert m.atoms[0] == Atom("N", charge=1, explicit_h=4, bracket=True)
        assert m.net_charge == 1

    def test_repeated_sign_charge(self):
        assert parse_smiles("[O--]").atoms[0].charge == -2
        assert parse_smiles("[Fe+3]").atoms[0].charge == 3

    def test_nitro_group(self):
        m = parse_smiles("C[N+](=O)[O-]")
        assert m.net_charge == 0
        assert formula(m) == "CH3NO2"

    def test_dot_keeps_components_in_one_molecule(self):
        m = parse_smiles("[Na+].[Cl-]")
        assert len(m) == 2
        assert m.bonds == ()
        assert formula(m) == "ClNa"

    def test_triple_bond(self):
        m = parse_smiles("C#N")
        assert m.bonds == (Bond(0, 1, 3),)
        assert m.implicit_h == (1, 0)

    def test_sulfur_expands_valence(self):
        m = parse_smiles("CS(=O)(=O)C")
        assert m.implicit_h[1] == 0

    def test_parse_many(self):
        mols = parse_many(["O", "CO"])
        assert [formula(m) for m in mols] == ["H2O", "CH4O"]

    def test_results_are_cached(self):
        assert parse_smiles("CCN") is parse_smiles("CCN")


class TestAnnotations:
    @pytest.mark.parametrize("smiles", ["C[C@H](N)C(=O)O", "[13CH4]", "C/C=C/C", "F/C=C\\F"])
    def test_stereo_and_isotopes_are_flagged(self, smiles):
        assert parse_smiles(smiles).annotations_ignored

    def test_plain_smiles_not_flagged(self):
        assert not parse_smiles("CC(=O)O").annotations_ignored

    def test_annotations_do_not_change_the_graph(self):
        assert parse_smiles("[13CH4]") == parse_smiles("[CH4]")
        assert parse_smiles("C/C=C/C") == parse_smiles("CC=CC")


class TestErrors:
    @pytest.mark.parametrize("text", ["", "   "])
    def test_empty(self, text):
        with pytest.raises(EmptyInput):
            parse_smiles(text)

    def test_unknown_token_position(self):
        with pytest.raises(UnknownToken) as excinfo:
            parse_smiles("CCX")
        assert excinfo.value.position == 2
        assert excinfo.value.token == "X"

    def test_unknown_bracket_element(self):
        with pytest.raises(UnknownToken):
            parse_smiles("[Xx]")

    def test_unclosed_branch(self):
        with pytest.raises(UnclosedBranch) as excinfo:
            parse_smiles("CC(C")
        assert excinfo.value.position == 2

    def test_close_without_open(self):
        with pytest.raises(UnclosedBranch):
            parse_smiles("CC)C")

    def test_unmatched_ring_closure(self):
        with pytest.raises(UnmatchedRingClosure) as excinfo:
            parse_smiles("C1CC")
        assert excinfo.value.position == 1

    def test_ring_closure_first(self):
        with pytest.raises(UnmatchedRingClosure):
            parse_smiles("1CC")

    def test_valence_underflow_reports_atom_position(self):
        with pytest.raises(ValenceUnderflow) as excinfo:
            parse_smiles("FC(F)(F)(F)F")
        assert excinfo.value.position == 1

    def test_trailing_bond(self):
        with pytest.raises(UnknownToken):
            parse_smiles("CC=")

    def test_duplicate_ring_bond(self):
        with pytest.raises(SmilesError):
            parse_smiles("C12CC12")

    def test_message_carries_position(self):
        with pytest.raises(SmilesError, match="position 2"):
            parse_smiles("CCX")


class TestMolecule:
    def test_bond_endpoints_are_normalized(self):
        assert Bond(3, 1, 2) == Bond(1, 3, 2)

    def test_rejects_dangling_bond(self):
        with pytest.raises(ValueError, match="missing atom"):
            Molecule(atoms=(Atom("C"),), bonds=(Bond(0, 1),))

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            Molecule(atoms=(Atom("C"), Atom("C")), bonds=(Bond(1, 1),))

    def test_smiles_text_not_part_of_equality(self):
        assert parse_smiles("OCC") != parse_smiles("CCO")
        assert Molecule(atoms=(Atom("O"),), smiles="O") == Molecule(atoms=(Atom("O"),))

    def test_graph_features(self):
        g = parse_smiles("CC(=O)O").graph
        assert g.nodes[2] == {
            "element": "O",
            "aromatic": False,
            "charge": 0,
            "degree": 1,
            "total_h": 0,
        }
        assert g.edges[1, 2]["order"] == 2

    def test_heavy_atom_count_ignores_hydrogen_atoms(self):
        assert parse_smiles("[H][H]").heavy_atom_count == 0
        assert parse_smiles("CCO").heavy_atom_count == 3


class TestFormula:
    @pytest.mark.parametrize(
        "smiles,expected",
        [
            ("CCO", "C2H6O"),
            ("O", "H2O"),
            ("Cl", "ClH"),
            ("[Cl-]", "Cl-"),
            ("c1ccccc1", "C6H6"),
            ("[O-]S(=O)(=O)[O-]", "O4S2-"),
            ("[H][H]", "H2"),
        ],
    )
    def test_hill_order(self, smiles, expected):
        assert formula(parse_smiles(smiles)) == expected

    def test_element_counts_sorted(self):
        assert list(element_counts(parse_smiles("OCC"))) == ["C", "H", "O"]

    def test_side_counts_weighted(self):
        side = side_counts([parse_smiles("[H][H]"), parse_smiles("O=O")], [2, 1])
        assert side == {"H": 4, "O": 2}
