"""Hashed path fingerprints, Tanimoto similarity and canonical molecule keys."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from rxncond.errors import WidthMismatch
from rxncond.molgraph import AROMATIC, Molecule

DEFAULT_WIDTH = 2048
MAX_PATH_BONDS = 3

_BOND_SYMBOL = {1: "-", 2: "=", 3: "#", AROMATIC: ":"}


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """Fixed-width bitset stored as a read-only numpy bool array."""

    bits: np.ndarray

    @property
    def width(self) -> int:
        return int(self.bits.shape[0])

    @property
    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    def on_bits(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.bits)]

    def __or__(self, other: Fingerprint) -> Fingerprint:
        if self.width != other.width:
            raise WidthMismatch(f"fingerprint widths differ: {self.width} vs {other.width}")
        return _frozen(self.bits | other.bits)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Fingerprint) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())


def _frozen(bits: np.ndarray) -> Fingerprint:
    bits = np.asarray(bits, dtype=bool).copy()
    bits.setflags(write=False)
    return Fingerprint(bits)


def empty_fingerprint(width: int = DEFAULT_WIDTH) -> Fingerprint:
    return _frozen(np.zeros(width, dtype=bool))


def _atom_token(m: Molecule, index: int) -> str:
    atom = m.atoms[index]
    token = atom.element.lower() if atom.aromatic else atom.element
    if atom.charge:
        token += f"{atom.charge:+d}"
    return token


def _path_features(m: Molecule) -> set[str]:
    """Linear paths of 0..3 bonds, each written in its smaller direction."""
    features: set[str] = set()

    def extend(path: list[int], orders: list[int]) -> None:
        forward = [_atom_token(m, path[0])]
        for atom_index, order in zip(path[1:], orders, strict=True):
            forward += [_BOND_SYMBOL[order], _atom_token(m, atom_index)]
        text = "".join(forward)
        reverse = "".join(reversed(forward))
        features.add(min(text, reverse))
        if len(orders) == MAX_PATH_BONDS:
            return
        for nxt, order in m.neighbors[path[-1]]:
            if nxt not in path:
                extend(path + [nxt], orders + [order])

    for start in range(len(m.atoms)):
        extend([start], [])
    return features


def _bit_index(feature: str, width: int) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % width


@lru_cache(maxsize=8192)
def fingerprint(m: Molecule, width: int = DEFAULT_WIDTH) -> Fingerprint:
    """Deterministic hashed path fingerprint of a molecule."""
    bits = np.zeros(width, dtype=bool)
    for feature in _path_features(m):
        bits[_bit_index(feature, width)] = True
    return _frozen(bits)


def combined_fingerprint(molecules: list[Molecule], width: int = DEFAULT_WIDTH) -> Fingerprint:
    """Bitwise OR of the fingerprints of a reaction side."""
    fp = empty_fingerprint(width)
    for m in molecules:
        fp = fp | fingerprint(m, width)
    return fp


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a AND b| / |a OR b|, defined as 1.0 when both are empty.

    Raises:
        WidthMismatch: When the fingerprints have different widths.
    """
    if a.width != b.width:
        raise WidthMismatch(f"fingerprint widths differ: {a.width} vs {b.width}")
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a.bits & b.bits)) / union


def canonical_key(m: Molecule) -> str:
    """Order-independent identity for deduplication.

    Built from the sorted multiset of per-atom invariants (element, charge, aromatic,
    degree, hydrogens, bond orders) plus the fingerprint. This is not a full graph
    canonization; distinct isomers may collide.
    """
    invariants = sorted(
        (
            atom.element,
            atom.charge,
            atom.aromatic,
            m.degree(i),
            m.total_h(i),
            tuple(sorted(order for _, order in m.neighbors[i])),
        )
        for i, atom in enumerate(m.atoms)
    )
    h = hashlib.blake2b(digest_size=16)
    h.update(repr(invariants).encode("utf-8"))
    h.update(fingerprint(m).bits.tobytes())
    return h.hexdigest()
