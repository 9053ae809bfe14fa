"""SMILES reader.

Supported subset: organic-subset atoms (aliphatic and aromatic), bracket atoms with
isotope, chirality, hydrogen count, charge and atom-map class, branches, ring closures
``0-9`` and ``%nn``, bonds ``- = # : /`` and ``\\``, and ``.`` disconnections.
Stereo marks and isotopes are read and dropped; the resulting molecule carries
``annotations_ignored=True``.

The grammar walker (``walk``) is shared with the SMARTS reader, which plugs in its own
atom and bond readers.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Generic, TypeVar

from rxncond.errors import (
    EmptyInput,
    SmilesError,
    UnclosedBranch,
    UnknownToken,
    UnmatchedRingClosure,
    ValenceUnderflow,
)
from rxncond.molgraph import (
    AROMATIC,
    ELEMENTS,
    Atom,
    Bond,
    Molecule,
    bond_valence,
    implicit_hydrogens,
)

A = TypeVar("A")
B = TypeVar("B")

DIGITS = "0123456789"
ORGANIC_TWO = ("Cl", "Br")
ORGANIC_ONE = frozenset("BCNOPSFI")
AROMATIC_ORGANIC = frozenset("bcnops")
AROMATIC_BRACKET = ("se", "as", "b", "c", "n", "o", "p", "s")
SMILES_BONDS: dict[str, int] = {"-": 1, "=": 2, "#": 3, ":": AROMATIC, "/": 1, "\\": 1}

# --- shared grammar walker -------------------------------------------------


@dataclass
class WalkResult(Generic[A, B]):
    """Atoms and bonds produced by ``walk`` before any semantic resolution.

    ``bonds`` holds (i, j, payload, position); payload is None for an unwritten bond.
    """

    atoms: list[A] = field(default_factory=list)
    atom_positions: list[int] = field(default_factory=list)
    bonds: list[tuple[int, int, B | None, int]] = field(default_factory=list)
    flags: set[str] = field(default_factory=set)


AtomReader = Callable[[str, int, set[str]], tuple[A, int]]
BondReader = Callable[[str, int, set[str]], tuple[B, int] | None]


def _ring_number(text: str, pos: int) -> tuple[int, int]:
    if text[pos] == "%":
        if pos + 2 < len(text) and text[pos + 1] in DIGITS and text[pos + 2] in DIGITS:
            return int(text[pos + 1 : pos + 3]), pos + 3
        raise UnknownToken(text[pos : pos + 3], pos)
    return int(text[pos]), pos + 1


def walk(text: str, read_atom: AtomReader[A], read_bond: BondReader[B]) -> WalkResult[A, B]:
    """Walk a SMILES-shaped string, delegating atom and bond tokens to the readers.

    Raises:
        EmptyInput, UnknownToken, UnclosedBranch, UnmatchedRingClosure, SmilesError.
    """
    if not text or not text.strip():
        raise EmptyInput("empty input")
    result: WalkResult[A, B] = WalkResult()
    seen_pairs: set[tuple[int, int]] = set()
    branch_stack: list[tuple[int, int]] = []
    open_rings: dict[int, tuple[int, B | None, int]] = {}
    prev: int | None = None
    pending: B | None = None
    pending_pos = -1
    pos = 0

    def connect(i: int, j: int, payload: B | None, at: int) -> None:
        if i == j:
            raise SmilesError("ring closure bonds an atom to itself", at)
        pair = (min(i, j), max(i, j))
        if pair in seen_pairs:
            raise SmilesError(f"duplicate bond between atoms {i} and {j}", at)
        seen_pairs.add(pair)
        result.bonds.append((i, j, payload, at))

    while pos < len(text):
        ch = text[pos]
        if ch == "(":
            if prev is None or pending is not None:
                raise UnclosedBranch("branch opened without a preceding atom", pos)
            branch_stack.append((prev, pos))
            pos += 1
        elif ch == ")":
            if not branch_stack:
                raise UnclosedBranch("branch closed without being opened", pos)
            if pending is not None:
                raise UnknownToken(text[pending_pos], pending_pos)
            prev, _ = branch_stack.pop()
            pos += 1
        elif ch == ".":
            if pending is not None or branch_stack:
                raise UnknownToken(ch, pos)
            prev = None
            pos += 1
        elif ch in DIGITS or ch == "%":
            if prev is None:
                raise UnmatchedRingClosure("ring closure without a preceding atom", pos)
            number, nxt = _ring_number(text, pos)
            if number in open_rings:
                partner, opening_bond, _ = open_rings.pop(number)
                connect(partner, prev, pending if pending is not None else opening_bond, pos)
            else:
                open_rings[number] = (prev, pending, pos)
            pending = None
            pos = nxt
        else:
            bond = read_bond(text, pos, result.flags)
            if bond is not None:
                if pending is not None or prev is None:
                    raise UnknownToken(ch, pos)
                pending, nxt = bond
                pending_pos = pos
                pos = nxt
                continue
            atom, nxt = read_atom(text, pos, result.flags)
            index = len(result.atoms)
            result.atoms.append(atom)
            result.atom_positions.append(pos)
            if prev is not None:
                connect(prev, index, pending, pos)
            pending = None
            prev = index
            pos = nxt

    if branch_stack:
        raise UnclosedBranch("unclosed branch", branch_stack[-1][1])
    if open_rings:
        number, (_, _, at) = min(open_rings.items(), key=lambda item: item[1][2])
        raise UnmatchedRingClosure(f"ring closure {number} never closed", at)
    if pending is not None:
        raise UnknownToken(text[pending_pos], pending_pos)
    return result


# --- SMILES atom and bond readers ------------------------------------------


def _read_count(text: str, pos: int, default: int) -> tuple[int, int]:
    start = pos
    while pos < len(text) and text[pos] in DIGITS:
        pos += 1
    if pos == start:
        return default, pos
    return int(text[start:pos]), pos


def _read_charge(text: str, pos: int) -> tuple[int, int]:
    if pos >= len(text) or text[pos] not in "+-":
        return 0, pos
    sign = 1 if text[pos] == "+" else -1
    pos += 1
    if pos < len(text) and text[pos] in DIGITS:
        magnitude, pos = _read_count(text, pos, 1)
        return sign * magnitude, pos
    magnitude = 1
    while pos < len(text) and text[pos] == text[pos - 1]:
        magnitude += 1
        pos += 1
    return sign * magnitude, pos


def _read_bracket_atom(text: str, start: int, flags: set[str]) -> tuple[Atom, int]:
    end = text.find("]", start + 1)
    if end < 0:
        raise UnknownToken("[", start)
    pos = start + 1
    if pos < end and text[pos] in DIGITS:
        _, pos = _read_count(text, pos, 0)
        flags.add("isotope")

    element: str | None = None
    aromatic = False
    for symbol in AROMATIC_BRACKET:
        if text.startswith(symbol, pos):
            element, aromatic = symbol.capitalize(), True
            pos += len(symbol)
            break
    if element is None:
        two = text[pos : pos + 2]
        if len(two) == 2 and two in ELEMENTS:
            element = two
            pos += 2
        elif pos < end and text[pos] in ELEMENTS:
            element = text[pos]
            pos += 1
    if element is None:
        raise UnknownToken(text[pos] if pos < len(text) else "[", pos)

    if pos < end and text[pos] == "@":
        flags.add("stereo")
        pos += 1
        if pos < end and text[pos] == "@":
            pos += 1
    hydrogens = 0
    if pos < end and text[pos] == "H":
        hydrogens, pos = _read_count(text, pos + 1, 1)
    charge, pos = _read_charge(text, pos)
    if pos < end and text[pos] == ":":
        _, pos = _read_count(text, pos + 1, 0)
    if pos != end:
        raise UnknownToken(text[pos], pos)
    atom = Atom(
        element=element, charge=charge, aromatic=aromatic, explicit_h=hydrogens, bracket=True
    )
    return atom, end + 1


def read_smiles_atom(text: str, pos: int, flags: set[str]) -> tuple[Atom, int]:
    if text[pos] == "[":
        return _read_bracket_atom(text, pos, flags)
    two = text[pos : pos + 2]
    if two in ORGANIC_TWO:
        return Atom(element=two), pos + 2
    ch = text[pos]
    if ch in ORGANIC_ONE:
        return Atom(element=ch), pos + 1
    if ch in AROMATIC_ORGANIC:
        return Atom(element=ch.upper(), aromatic=True), pos + 1
    raise UnknownToken(ch, pos)


def read_smiles_bond(text: str, pos: int, flags: set[str]) -> tuple[int, int] | None:
    ch = text[pos]
    if ch not in SMILES_BONDS:
        return None
    if ch in "/\\":
        flags.add("stereo")
    return SMILES_BONDS[ch], pos + 1


# --- public entry point ----------------------------------------------------


@lru_cache(maxsize=8192)
def parse_smiles(text: str) -> Molecule:
    """Parse SMILES text into a ``Molecule``.

    Args:
        text: SMILES string in the supported subset.

    Returns:
        The parsed molecule; ``smiles`` is set to the stripped input.

    Raises:
        EmptyInput, UnknownToken, UnclosedBranch, UnmatchedRingClosure,
        ValenceUnderflow: With the offending character position where known.
    """
    if not isinstance(text, str):
        raise UnknownToken(repr(text)[:10], 0)
    stripped = text.strip()
    walked = walk(stripped, read_smiles_atom, read_smiles_bond)

    bonds: list[Bond] = []
    for i, j, order, _ in walked.bonds:
        if order is None:
            both = walked.atoms[i].aromatic and walked.atoms[j].aromatic
            order = AROMATIC if both else 1
        bonds.append(Bond(i, j, order))

    sums = [0] * len(walked.atoms)
    for bond in bonds:
        sums[bond.a] += bond_valence(bond.order)
        sums[bond.b] += bond_valence(bond.order)
    for index, atom in enumerate(walked.atoms):
        try:
            implicit_hydrogens(atom, sums[index])
        except ValenceUnderflow as e:
            raise ValenceUnderflow(str(e), walked.atom_positions[index]) from None

    return Molecule(
        atoms=tuple(walked.atoms),
        bonds=tuple(bonds),
        smiles=stripped,
        annotations_ignored=bool(walked.flags),
    )


def parse_many(smiles_list: list[str]) -> list[Molecule]:
    """Parse each SMILES of a list, expanding nothing (dots stay within a molecule)."""
    return [parse_smiles(s) for s in smiles_list]
