"""Tests for maximum common substructure search."""

import itertools

import networkx as nx
import pytest
from networkx.algorithms import isomorphism

from rxncond.mcs import label_overlap, mcs
from rxncond.smiles import parse_smiles


def _labelled(m):
    g = nx.Graph()
    for i, atom in enumerate(m.atoms):
        g.add_node(i, label=(atom.element, atom.aromatic))
    for bond in m.bonds:
        g.add_edge(bond.a, bond.b, order=bond.order)
    return g


def brute_force_size(a, b):
    """Size of the largest connected induced common subgraph, by exhaustive search."""
    ga, gb = _labelled(a), _labelled(b)
    for size in range(min(len(a), len(b)), 0, -1):
        for nodes in itertools.combinations(ga.nodes, size):
            sub = ga.subgraph(nodes)
            if not nx.is_connected(sub):
                continue
            matcher = isomorphism.GraphMatcher(
                gb,
                sub,
                node_match=lambda x, y: x["label"] == y["label"],
                edge_match=lambda x, y: x["order"] == y["order"],
            )
            if matcher.subgraph_is_isomorphic():
                return size
    return 0


def assert_valid_mapping(a, b, mapping):
    for i, j in mapping.pairs:
        assert a.atoms[i].element == b.atoms[j].element
        assert a.atoms[i].aromatic == b.atoms[j].aromatic
    for (i, j), (k, l) in itertools.combinations(mapping.pairs, 2):
        assert a.bond_lookup.get((i, k), 0) == b.bond_lookup.get((j, l), 0)
    if mapping.pairs:
        assert nx.is_connected(_labelled(a).subgraph(mapping.atoms_a))


PAIRS = [
    ("CCO", "OCC"),
    ("CC(=O)O", "CC(=O)OC"),
    ("CC(=O)Cl", "CC(=O)NC"),
    ("c1ccccc1O", "c1ccccc1OC"),
    ("c1ccccc1Br", "C#Cc1ccccc1"),
    ("CC(C)O", "CCCO"),
    ("C=CC=O", "CC=CO"),
    ("NCCO", "OCCN"),
    ("CCOC(=O)C", "CC(=O)O"),
    ("CCN", "NCC"),
    ("C1CCCCC1", "CCCCCC"),
    ("C1CCCCC1", "C1CCCC1"),
    ("CC(C)(C)O", "CC(C)CO"),
    ("OC(=O)CCC(=O)O", "CCC(=O)O"),
    ("c1ccncc1", "c1ccccc1"),
    ("CC#N", "CC#C"),
    ("NC(=O)N", "CC(=O)N"),
    ("C=CC=C", "CC=CC"),
    ("OCCOCCO", "CCOCC"),
    ("CC(=O)OC(C)=O", "CC(=O)O"),
    ("ClCCCl", "ClCCBr"),
    ("CCCCCCCC", "CCC(C)CC"),
    ("CC1CC1", "CC1CCC1"),
    ("c1ccoc1", "C1CCOC1"),
]


class TestMcs:
    @pytest.mark.parametrize("left,right", PAIRS)
    def test_size_matches_exhaustive_search(self, left, right):
        a, b = parse_smiles(left), parse_smiles(right)
        mapping = mcs(a, b)
        assert not mapping.approximate
        assert len(mapping) == brute_force_size(a, b)
        assert_valid_mapping(a, b, mapping)

    def test_identical_molecule_maps_fully(self):
        m = parse_smiles("CC(=O)Nc1ccccc1")
        assert len(mcs(m, m)) == len(m)

    def test_pairs_are_sorted(self):
        mapping = mcs(parse_smiles("CCO"), parse_smiles("OCC"))
        assert list(mapping.pairs) == sorted(mapping.pairs)

    def test_disjoint_labels(self):
        assert len(mcs(parse_smiles("O"), parse_smiles("N"))) == 0

    def test_cap_stops_search(self):
        m = parse_smiles("CCCCCC")
        assert len(mcs(m, m, cap=2)) == 2

    def test_zero_cap(self):
        m = parse_smiles("CC")
        assert len(mcs(m, m, cap=0)) == 0

    def test_budget_exhaustion_is_flagged(self):
        m = parse_smiles("c1ccccc1CCO")
        mapping = mcs(m, m, budget=2)
        assert mapping.approximate
        assert len(mapping) < len(m)

    def test_atom_subsets_restrict_mapping(self):
        a = parse_smiles("CCO")
        b = parse_smiles("CCO")
        mapping = mcs(a, b, atoms_a=frozenset({1, 2}))
        assert mapping.atoms_a <= {1, 2}
        assert len(mapping) == 2


class TestLabelOverlap:
    def test_counts_shared_labels(self):
        assert label_overlap(parse_smiles("CCO"), parse_smiles("CCN")) == 2

    def test_aromatic_is_a_distinct_label(self):
        assert label_overlap(parse_smiles("c1ccccc1"), parse_smiles("CCCCCC")) == 0

    @pytest.mark.parametrize("left,right", PAIRS)
    def test_bounds_mcs(self, left, right):
        a, b = parse_smiles(left), parse_smiles(right)
        assert len(mcs(a, b)) <= label_overlap(a, b)
