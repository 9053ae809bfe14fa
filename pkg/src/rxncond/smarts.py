"""SMARTS subset: pattern parsing and substructure matching.

Supported atom primitives: element symbols (uppercase aliphatic, lowercase aromatic),
``#n``, ``a``/``A``, ``*``, charge, ``D`` (explicit connections), ``H`` (total
hydrogens), ``X`` (total connections), combined with ``!``, ``&``, ``,`` and ``;``.
Bond primitives: ``- = # : ~``; an unwritten bond matches single or aromatic.
Recursive SMARTS, ring primitives and bond logic are not supported.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Any

import networkx as nx
from networkx.algorithms import isomorphism

from rxncond.errors import UnsupportedPrimitive
from rxncond.molgraph import AROMATIC, ATOMIC_NUMBER, ELEMENTS, AtomMapping, Molecule
from rxncond.smiles import DIGITS, walk

# --- predicates ------------------------------------------------------------


@dataclass(frozen=True)
class Primitive:
    """Leaf atom test. ``kind`` is one of any, element, aromatic, charge, degree,
    total_h, connectivity."""

    kind: str
    value: Any = None
    aromatic: bool | None = None

    def test(self, atom: dict[str, Any]) -> bool:
        match self.kind:
            case "any":
                return True
            case "element":
                if atom["element"] != self.value:
                    return False
                return self.aromatic is None or atom["aromatic"] == self.aromatic
            case "aromatic":
                return atom["aromatic"] == self.value
            case "charge":
                return atom["charge"] == self.value
            case "degree":
                return atom["degree"] == self.value
            case "total_h":
                return atom["total_h"] == self.value
            case "connectivity":
                return atom["degree"] + atom["total_h"] == self.value
        raise ValueError(f"unknown primitive kind {self.kind!r}")

    def required_element(self) -> str | None:
        return self.value if self.kind == "element" else None


@dataclass(frozen=True)
class Not:
    inner: AtomPredicate

    def test(self, atom: dict[str, Any]) -> bool:
        return not self.inner.test(atom)

    def required_element(self) -> str | None:
        return None


@dataclass(frozen=True)
class And:
    parts: tuple[AtomPredicate, ...]

    def test(self, atom: dict[str, Any]) -> bool:
        return all(p.test(atom) for p in self.parts)

    def required_element(self) -> str | None:
        for part in self.parts:
            element = part.required_element()
            if element is not None:
                return element
        return None


@dataclass(frozen=True)
class Or:
    parts: tuple[AtomPredicate, ...]

    def test(self, atom: dict[str, Any]) -> bool:
        return any(p.test(atom) for p in self.parts)

    def required_element(self) -> str | None:
        return None


AtomPredicate = Primitive | Not | And | Or


@dataclass(frozen=True)
class BondPredicate:
    orders: frozenset[int]

    def test(self, order: int) -> bool:
        return order in self.orders


ANY_BOND = BondPredicate(frozenset({1, 2, 3, AROMATIC}))
DEFAULT_BOND = BondPredicate(frozenset({1, AROMATIC}))
SMARTS_BONDS: dict[str, BondPredicate] = {
    "-": BondPredicate(frozenset({1})),
    "=": BondPredicate(frozenset({2})),
    "#": BondPredicate(frozenset({3})),
    ":": BondPredicate(frozenset({AROMATIC})),
    "~": ANY_BOND,
}
UNSUPPORTED_BOND_CHARS = frozenset("@/\\!")


@dataclass(frozen=True)
class Pattern:
    """Compiled SMARTS: one predicate per node, bond predicates on edges."""

    nodes: tuple[AtomPredicate, ...]
    edges: tuple[tuple[int, int, BondPredicate], ...]
    source: str = ""

    @cached_property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        for i, pred in enumerate(self.nodes):
            g.add_node(i, pred=pred)
        for a, b, pred in self.edges:
            g.add_edge(a, b, pred=pred)
        return g

    @cached_property
    def required_elements(self) -> Counter[str]:
        return Counter(e for e in (n.required_element() for n in self.nodes) if e is not None)


# --- bracket expression parser ---------------------------------------------


class _BracketParser:
    """Recursive descent over ``[...]`` content; precedence ; < , < & < !."""

    def __init__(self, text: str, start: int, end: int) -> None:
        self.text = text
        self.pos = start
        self.start = start
        self.end = end

    def parse(self) -> AtomPredicate:
        if self.pos >= self.end:
            raise UnsupportedPrimitive("[]", self.start - 1)
        pred = self._low_and()
        if self.pos != self.end:
            raise UnsupportedPrimitive(self.text[self.pos], self.pos)
        return pred

    def _peek(self) -> str:
        return self.text[self.pos] if self.pos < self.end else ""

    def _low_and(self) -> AtomPredicate:
        parts = [self._or()]
        while self._peek() == ";":
            self.pos += 1
            parts.append(self._or())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def _or(self) -> AtomPredicate:
        parts = [self._high_and()]
        while self._peek() == ",":
            self.pos += 1
            parts.append(self._high_and())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def _high_and(self) -> AtomPredicate:
        parts = [self._unary()]
        while self._peek() and self._peek() not in ",;":
            if self._peek() == "&":
                self.pos += 1
            parts.append(self._unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def _unary(self) -> AtomPredicate:
        if self._peek() == "!":
            self.pos += 1
            return Not(self._unary())
        return self._primitive()

    def _count(self, default: int) -> int:
        start = self.pos
        while self.pos < self.end and self.text[self.pos] in DIGITS:
            self.pos += 1
        return int(self.text[start : self.pos]) if self.pos > start else default

    def _primitive(self) -> Primitive:
        text, pos = self.text, self.pos
        ch = self._peek()
        if not ch:
            raise UnsupportedPrimitive("", pos)
        two = text[pos : pos + 2] if pos + 2 <= self.end else ""
        if len(two) == 2 and two[1].islower() and two in ELEMENTS:
            self.pos += 2
            return Primitive("element", two, aromatic=False)
        if two == "se":
            self.pos += 2
            return Primitive("element", "Se", aromatic=True)
        if ch == "H":
            follower = text[pos + 1] if pos + 1 < self.end else ""
            if pos == self.start and follower in ("", "+", "-"):
                self.pos += 1
                return Primitive("element", "H")
            self.pos += 1
            return Primitive("total_h", self._count(1))
        self.pos += 1
        match ch:
            case "*":
                return Primitive("any")
            case "a":
                return Primitive("aromatic", True)
            case "A":
                return Primitive("aromatic", False)
            case "D":
                return Primitive("degree", self._count(1))
            case "X":
                return Primitive("connectivity", self._count(1))
            case "#":
                z = self._count(0)
                if not 1 <= z <= len(ELEMENTS):
                    raise UnsupportedPrimitive(f"#{z}", pos)
                return Primitive("element", ELEMENTS[z - 1])
            case "+" | "-":
                sign = 1 if ch == "+" else -1
                if self._peek() and self._peek() in DIGITS:
                    return Primitive("charge", sign * self._count(1))
                magnitude = 1
                while self._peek() == ch:
                    magnitude += 1
                    self.pos += 1
                return Primitive("charge", sign * magnitude)
        if ch in "bcnops":
            return Primitive("element", ch.upper(), aromatic=True)
        if ch in ATOMIC_NUMBER:
            return Primitive("element", ch, aromatic=False)
        raise UnsupportedPrimitive("$(" if ch == "$" else ch, pos)


# --- atom and bond readers for the shared walker ---------------------------


def _read_smarts_atom(text: str, pos: int, flags: set[str]) -> tuple[AtomPredicate, int]:
    ch = text[pos]
    if ch == "[":
        end = text.find("]", pos + 1)
        if end < 0:
            raise UnsupportedPrimitive("[", pos)
        return _BracketParser(text, pos + 1, end).parse(), end + 1
    two = text[pos : pos + 2]
    if two in ("Cl", "Br"):
        return Primitive("element", two, aromatic=False), pos + 2
    if ch == "*":
        return Primitive("any"), pos + 1
    if ch in "aA":
        return Primitive("aromatic", ch == "a"), pos + 1
    if ch in "BCNOPSFI":
        return Primitive("element", ch, aromatic=False), pos + 1
    if ch in "bcnops":
        return Primitive("element", ch.upper(), aromatic=True), pos + 1
    raise UnsupportedPrimitive(ch, pos)


def _read_smarts_bond(text: str, pos: int, flags: set[str]) -> tuple[BondPredicate, int] | None:
    ch = text[pos]
    if ch in SMARTS_BONDS:
        return SMARTS_BONDS[ch], pos + 1
    if ch in UNSUPPORTED_BOND_CHARS:
        raise UnsupportedPrimitive(ch, pos)
    return None


@lru_cache(maxsize=1024)
def parse_smarts(text: str) -> Pattern:
    """Compile SMARTS text into a ``Pattern``.

    Raises:
        UnsupportedPrimitive: For primitives outside the supported subset.
        SmilesError: For structural errors (branches, ring closures, empty input).
    """
    stripped = text.strip()
    walked = walk(stripped, _read_smarts_atom, _read_smarts_bond)
    edges = tuple(
        (i, j, pred if pred is not None else DEFAULT_BOND) for i, j, pred, _ in walked.bonds
    )
    return Pattern(nodes=tuple(walked.atoms), edges=edges, source=stripped)


# --- matching --------------------------------------------------------------


def _node_match(atom: dict[str, Any], node: dict[str, Any]) -> bool:
    return node["pred"].test(atom)


def _edge_match(bond: dict[str, Any], edge: dict[str, Any]) -> bool:
    return edge["pred"].test(bond["order"])


def match_pattern(p: Pattern, m: Molecule) -> list[AtomMapping]:
    """All embeddings of ``p`` in ``m``, one per matched atom set.

    Each mapping pairs (pattern node, molecule atom). For every distinct atom set the
    lexicographically smallest assignment (molecule indices in pattern-node order) is
    kept, and results are sorted by that assignment.
    """
    if len(p.nodes) > len(m.atoms):
        return []
    available = Counter(atom.element for atom in m.atoms)
    if any(available[el] < n for el, n in p.required_elements.items()):
        return []

    matcher = isomorphism.GraphMatcher(
        m.graph, p.graph, node_match=_node_match, edge_match=_edge_match
    )
    best: dict[frozenset[int], tuple[int, ...]] = {}
    for mol_to_pattern in matcher.subgraph_monomorphisms_iter():
        assignment = [0] * len(p.nodes)
        for mol_index, node in mol_to_pattern.items():
            assignment[node] = mol_index
        key = frozenset(assignment)
        candidate = tuple(assignment)
        if key not in best or candidate < best[key]:
            best[key] = candidate
    return [
        AtomMapping(pairs=tuple(enumerate(assignment)))
        for assignment in sorted(best.values())
    ]
