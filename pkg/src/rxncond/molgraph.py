"""Molecular graph types shared by every chemistry module.

A ``Molecule`` is an immutable list of atoms plus a list of bonds. Hydrogens are
normally implicit: the count on each atom is derived from a fixed valence table.
Bracket atoms carry their hydrogens explicitly and never receive implicit ones.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import networkx as nx

from rxncond.errors import ValenceUnderflow

AROMATIC = 4
"""Bond-order code for an aromatic bond."""

BOND_ORDERS: frozenset[int] = frozenset({1, 2, 3, AROMATIC})

# Smallest valence >= current bond-order sum is chosen.
VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

# Ordered by atomic number; index + 1 is Z.
ELEMENTS: tuple[str, ...] = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn",
)  # fmt: skip

ATOMIC_NUMBER: dict[str, int] = {symbol: z for z, symbol in enumerate(ELEMENTS, start=1)}


@dataclass(frozen=True)
class Atom:
    """One atom: element symbol (capitalized even when aromatic), charge, flags."""

    element: str
    charge: int = 0
    aromatic: bool = False
    explicit_h: int = 0
    bracket: bool = False


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: int = 1

    def __post_init__(self) -> None:
        if self.a > self.b:
            lo, hi = self.b, self.a
            object.__setattr__(self, "a", lo)
            object.__setattr__(self, "b", hi)


def bond_valence(order: int) -> int:
    """Contribution of a bond to the valence sum (aromatic bonds count 1)."""
    return 1 if order == AROMATIC else order


def implicit_hydrogens(atom: Atom, bond_sum: int) -> int:
    """Implicit hydrogen count for an atom with the given bond-order sum.

    Raises:
        ValenceUnderflow: When an aliphatic organic-subset atom exceeds every valence.
    """
    if atom.bracket or atom.element not in VALENCES:
        return 0
    need = bond_sum + 1 if atom.aromatic else bond_sum
    for valence in VALENCES[atom.element]:
        if valence >= need:
            return valence - need
    if atom.aromatic:
        return 0
    raise ValenceUnderflow(
        f"{atom.element} with bond-order sum {bond_sum} exceeds valences {VALENCES[atom.element]}"
    )


@dataclass(frozen=True)
class Molecule:
    """Parsed molecular graph.

    ``smiles`` is the text the molecule was parsed from and takes no part in equality.
    ``annotations_ignored`` is set when stereo or isotope marks were dropped.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...] = ()
    smiles: str = field(default="", compare=False)
    annotations_ignored: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        n = len(self.atoms)
        seen: set[tuple[int, int]] = set()
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise ValueError(f"bond {bond} references a missing atom")
            if bond.a == bond.b:
                raise ValueError(f"self-loop on atom {bond.a}")
            if (bond.a, bond.b) in seen:
                raise ValueError(f"duplicate bond {bond.a}-{bond.b}")
            if bond.order not in BOND_ORDERS:
                raise ValueError(f"invalid bond order {bond.order}")
            seen.add((bond.a, bond.b))

    def __len__(self) -> int:
        return len(self.atoms)

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per atom, sorted (neighbor index, bond order) pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        return tuple(tuple(sorted(row)) for row in adj)

    @cached_property
    def bond_lookup(self) -> dict[tuple[int, int], int]:
        """Bond order keyed by both (a, b) and (b, a)."""
        lookup: dict[tuple[int, int], int] = {}
        for bond in self.bonds:
            lookup[(bond.a, bond.b)] = bond.order
            lookup[(bond.b, bond.a)] = bond.order
        return lookup

    @cached_property
    def implicit_h(self) -> tuple[int, ...]:
        return tuple(
            implicit_hydrogens(atom, sum(bond_valence(o) for _, o in self.neighbors[i]))
            for i, atom in enumerate(self.atoms)
        )

    def degree(self, index: int) -> int:
        return len(self.neighbors[index])

    def total_h(self, index: int) -> int:
        """Explicit + implicit hydrogens plus any bonded hydrogen atoms."""
        attached = sum(1 for j, _ in self.neighbors[index] if self.atoms[j].element == "H")
        return self.atoms[index].explicit_h + self.implicit_h[index] + attached

    @property
    def heavy_atom_count(self) -> int:
        return sum(1 for atom in self.atoms if atom.element != "H")

    @property
    def net_charge(self) -> int:
        return sum(atom.charge for atom in self.atoms)

    @cached_property
    def graph(self) -> nx.Graph:
        """networkx view with per-atom features used by pattern matching."""
        g = nx.Graph()
        for i, atom in enumerate(self.atoms):
            g.add_node(
                i,
                element=atom.element,
                aromatic=atom.aromatic,
                charge=atom.charge,
                degree=self.degree(i),
                total_h=self.total_h(i),
            )
        for bond in self.bonds:
            g.add_edge(bond.a, bond.b, order=bond.order)
        return g


def element_counts(m: Molecule) -> dict[str, int]:
    """Total atom counts per element, hydrogens (implicit and explicit) included."""
    counts: Counter[str] = Counter()
    for i, atom in enumerate(m.atoms):
        counts[atom.element] += 1
        h = atom.explicit_h + m.implicit_h[i]
        if h:
            counts["H"] += h
    return dict(sorted(counts.items()))


def side_counts(molecules: list[Molecule], coefficients: list[int] | None = None) -> Counter[str]:
    """Summed element counts of a reaction side, optionally weighted."""
    total: Counter[str] = Counter()
    coefficients = coefficients or [1] * len(molecules)
    for m, nu in zip(molecules, coefficients, strict=True):
        for element, n in element_counts(m).items():
            total[element] += nu * n
    return total


def formula(m: Molecule) -> str:
    """Hill-order formula with net charge suffix, e.g. ``C2H6O`` or ``Cl-``."""
    counts = element_counts(m)
    order: list[str] = []
    if "C" in counts:
        order = ["C"] + (["H"] if "H" in counts else [])
    order += sorted(el for el in counts if el not in order)
    text = "".join(el if counts[el] == 1 else f"{el}{counts[el]}" for el in order)
    charge = m.net_charge
    if charge:
        sign = "+" if charge > 0 else "-"
        text += sign if abs(charge) == 1 else f"{abs(charge)}{sign}"
    return text


@dataclass(frozen=True)
class AtomMapping:
    """Injective atom correspondence as sorted (index in A, index in B) pairs."""

    pairs: tuple[tuple[int, int], ...] = ()
    approximate: bool = False

    def __post_init__(self) -> None:
        left = [a for a, _ in self.pairs]
        right = [b for _, b in self.pairs]
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise ValueError("atom mapping is not injective")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def atoms_a(self) -> frozenset[int]:
        return frozenset(a for a, _ in self.pairs)

    @property
    def atoms_b(self) -> frozenset[int]:
        return frozenset(b for _, b in self.pairs)
