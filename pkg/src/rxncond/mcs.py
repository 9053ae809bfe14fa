"""Maximum common connected substructure by label-class backtracking.

Atoms match on (element, aromatic); a pair of mapped atoms must agree on bonding in
both molecules (same bond order, or both unbonded), so the result is a connected
induced common subgraph. Candidates are kept in label classes that are split every
time an atom pair is added, and a class-size bound prunes branches that cannot beat
the incumbent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from rxncond.molgraph import AtomMapping, Molecule

DEFAULT_CAP = 24
DEFAULT_BUDGET = 1_000_000

# (atoms of A, atoms of B, adjacent to the current mapping)
LabelClass = tuple[tuple[int, ...], tuple[int, ...], bool]


def _label(m: Molecule, index: int) -> tuple[str, bool]:
    atom = m.atoms[index]
    return (atom.element, atom.aromatic)


@dataclass
class _Search:
    a: Molecule
    b: Molecule
    cap: int
    budget: int
    expansions: int = 0
    exhausted: bool = False
    best: list[tuple[int, int]] = field(default_factory=list)

    def refine(self, classes: list[LabelClass], v: int, w: int) -> list[LabelClass]:
        bonds_a, bonds_b = self.a.bond_lookup, self.b.bond_lookup
        refined: list[LabelClass] = []
        for g_nodes, h_nodes, adjacent in classes:
            split_g: dict[int, list[int]] = {}
            for u in g_nodes:
                if u != v:
                    split_g.setdefault(bonds_a.get((v, u), 0), []).append(u)
            split_h: dict[int, list[int]] = {}
            for x in h_nodes:
                if x != w:
                    split_h.setdefault(bonds_b.get((w, x), 0), []).append(x)
            for order in sorted(split_g):
                if order in split_h:
                    refined.append(
                        (tuple(split_g[order]), tuple(split_h[order]), adjacent or order != 0)
                    )
        return refined

    def run(self, classes: list[LabelClass], mapping: list[tuple[int, int]]) -> None:
        if self.expansions >= self.budget:
            self.exhausted = True
            return
        self.expansions += 1
        if len(mapping) > len(self.best):
            self.best = list(mapping)
        if len(self.best) >= self.cap:
            return
        bound = len(mapping) + sum(min(len(g), len(h)) for g, h, _ in classes)
        if bound <= len(self.best):
            return
        eligible = classes if not mapping else [c for c in classes if c[2]]
        if not eligible:
            return

        chosen = min(eligible, key=lambda c: (max(len(c[0]), len(c[1])), c[0][0]))
        g_nodes, h_nodes, adjacent = chosen
        v = g_nodes[0]
        for w in h_nodes:
            mapping.append((v, w))
            self.run(self.refine(classes, v, w), mapping)
            mapping.pop()
            if self.exhausted:
                return

        remaining: list[LabelClass] = []
        for c in classes:
            if c is chosen:
                if len(g_nodes) > 1:
                    remaining.append((g_nodes[1:], h_nodes, adjacent))
            else:
                remaining.append(c)
        self.run(remaining, mapping)


def mcs(
    a: Molecule,
    b: Molecule,
    cap: int = DEFAULT_CAP,
    budget: int = DEFAULT_BUDGET,
    *,
    atoms_a: frozenset[int] | None = None,
    atoms_b: frozenset[int] | None = None,
) -> AtomMapping:
    """Maximum common connected substructure mapping between ``a`` and ``b``.

    Args:
        a, b: Molecules to align.
        cap: Largest mapping size searched for; the search stops once reached.
        budget: Node-expansion limit. When exhausted the best mapping found so far is
            returned with ``approximate=True``.
        atoms_a, atoms_b: Optional subsets restricting which atoms may be mapped.

    Returns:
        Mapping of (atom in a, atom in b) pairs, sorted.
    """
    pool_a = sorted(atoms_a) if atoms_a is not None else range(len(a.atoms))
    pool_b = sorted(atoms_b) if atoms_b is not None else range(len(b.atoms))
    by_label_a: dict[tuple[str, bool], list[int]] = {}
    for i in pool_a:
        by_label_a.setdefault(_label(a, i), []).append(i)
    by_label_b: dict[tuple[str, bool], list[int]] = {}
    for j in pool_b:
        by_label_b.setdefault(_label(b, j), []).append(j)
    classes: list[LabelClass] = [
        (tuple(nodes), tuple(by_label_b[label]), False)
        for label, nodes in sorted(by_label_a.items())
        if label in by_label_b
    ]
    if not classes or cap <= 0:
        return AtomMapping()

    search = _Search(a=a, b=b, cap=cap, budget=budget)
    search.run(classes, [])
    return AtomMapping(pairs=tuple(sorted(search.best)), approximate=search.exhausted)


def label_overlap(a: Molecule, b: Molecule) -> int:
    """Upper bound on ``len(mcs(a, b))`` from shared atom-label counts."""
    counts_a: dict[tuple[str, bool], int] = {}
    for i in range(len(a.atoms)):
        key = _label(a, i)
        counts_a[key] = counts_a.get(key, 0) + 1
    counts_b: dict[tuple[str, bool], int] = {}
    for j in range(len(b.atoms)):
        key = _label(b, j)
        counts_b[key] = counts_b.get(key, 0) + 1
    return sum(min(n, counts_b.get(key, 0)) for key, n in counts_a.items())
