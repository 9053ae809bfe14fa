"""Constraint engine: stoichiometry, atom mapping, by-products and hard checks."""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import sympy

from rxncond.data import read_bundled
from rxncond.errors import (
    DuplicateName,
    EmptySide,
    LibraryParseError,
    NegativeDifference,
    SmilesError,
    Unbalanceable,
    UnreadableSource,
)
from rxncond.fingerprint import canonical_key
from rxncond.mcs import DEFAULT_BUDGET, DEFAULT_CAP, mcs
from rxncond.models import ConditionConfig, Reaction, ReactionReport
from rxncond.molgraph import AtomMapping, Molecule, element_counts, side_counts
from rxncond.smiles import parse_smiles
from rxncond.species import SpeciesDictionary

COEFFICIENT_BOUND = 12
MAX_SEARCH_POINTS = 50_000_000
_CHUNK = 1 << 20
MAX_BYPRODUCT_TERMS = 6
BUNDLED_LEAVING_GROUPS = "leaving_groups.tsv"
RESIDUE_RULE = "unexplained_residue"

# --- stoichiometry ---------------------------------------------------------


@dataclass(frozen=True)
class Stoichiometry:
    """Integer coefficients; ``aux`` pairs each auxiliary SMILES with its coefficient."""

    reactants: tuple[int, ...]
    products: tuple[int, ...]
    aux: tuple[tuple[str, int], ...] = ()

    def coefficients(self) -> list[int]:
        return [*self.reactants, *self.products, *(n for _, n in self.aux)]


def _conservation_rows(species: list[Molecule], signs: list[int]) -> list[list[int]]:
    counts = [element_counts(m) for m in species]
    elements = sorted(set().union(*counts))
    rows = [[sign * c.get(el, 0) for c, sign in zip(counts, signs)] for el in elements]
    charges = [sign * m.net_charge for m, sign in zip(species, signs)]
    if any(charges):
        rows.append(charges)
    return rows


def _primitive_integer_vector(vector: sympy.Matrix) -> list[int]:
    denominators = [sympy.Rational(v).q for v in vector]
    scale = sympy.ilcm(*denominators) if len(denominators) > 1 else denominators[0]
    ints = [int(sympy.Rational(v) * scale) for v in vector]
    divisor = math.gcd(*ints) or 1
    ints = [v // divisor for v in ints]
    if all(v <= 0 for v in ints):
        ints = [-v for v in ints]
    return ints


def _exhaustive_search(rows: list[list[int]], n_fixed: int, n_aux: int, bound: int) -> list[int]:
    """Smallest-sum coefficient vector (then lexicographically smallest) in the box."""
    lows = np.array([1] * n_fixed + [0] * n_aux, dtype=np.int64)
    sizes = bound - lows + 1
    total = int(np.prod(sizes))
    if total > MAX_SEARCH_POINTS:
        raise Unbalanceable(f"coefficient search space too large ({total} points)")
    matrix = np.array(rows, dtype=np.int64)
    best: np.ndarray | None = None
    for start in range(0, total, _CHUNK):
        remainder = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        digits = np.empty((remainder.shape[0], len(sizes)), dtype=np.int64)
        for k in range(len(sizes) - 1, -1, -1):
            digits[:, k] = remainder % sizes[k] + lows[k]
            remainder = remainder // sizes[k]
        hits = digits[np.all(digits @ matrix.T == 0, axis=1)]
        if hits.shape[0] == 0:
            continue
        order = np.lexsort(tuple(hits[:, k] for k in range(hits.shape[1] - 1, -1, -1)))
        hits = hits[order]
        candidate = hits[np.argmin(hits.sum(axis=1))]
        if best is None or (candidate.sum(), tuple(candidate)) < (best.sum(), tuple(best)):
            best = candidate
    if best is None:
        raise Unbalanceable(f"no positive integer solution with coefficients <= {bound}")
    return [int(v) for v in best]


def balance_stoichiometry(
    reactants: list[Molecule],
    products: list[Molecule],
    aux: list[Molecule] | None = None,
    *,
    bound: int = COEFFICIENT_BOUND,
) -> Stoichiometry:
    """Minimal positive-integer coefficients conserving every element and charge.

    A one-dimensional rational nullspace is scaled to integers directly. Wider
    nullspaces fall back to exhaustive search over coefficients up to ``bound``.
    Auxiliary species may take coefficient 0.

    Raises:
        EmptySide: If either side is empty.
        Unbalanceable: If no admissible solution exists.
    """
    if not reactants or not products:
        raise EmptySide("a reaction needs at least one reactant and one product")
    aux = aux or []
    species = [*reactants, *products, *aux]
    signs = [1] * len(reactants) + [-1] * (len(products) + len(aux))
    rows = _conservation_rows(species, signs)
    n_fixed = len(reactants) + len(products)

    basis = sympy.Matrix(rows).nullspace()
    if not basis:
        raise Unbalanceable("element conservation admits only the zero solution")
    if len(basis) == 1:
        vector = _primitive_integer_vector(basis[0])
        if not (all(v > 0 for v in vector[:n_fixed]) and all(v >= 0 for v in vector[n_fixed:])):
            raise Unbalanceable("the only conserving combination has mixed signs")
    else:
        vector = _exhaustive_search(rows, n_fixed, len(aux), bound)

    return Stoichiometry(
        reactants=tuple(vector[: len(reactants)]),
        products=tuple(vector[len(reactants) : n_fixed]),
        aux=tuple((m.smiles, v) for m, v in zip(aux, vector[n_fixed:])),
    )


def is_conserved(
    reactants: list[Molecule], products: list[Molecule], aux: list[Molecule], s: Stoichiometry
) -> bool:
    left = side_counts(reactants, list(s.reactants))
    right = side_counts(products, list(s.products))
    right.update(side_counts(aux, [n for _, n in s.aux]) if aux else Counter())
    return +left == +right


def format_equation(
    reactants: list[Molecule], products: list[Molecule], s: Stoichiometry
) -> str:
    """Human-readable balanced equation; auxiliary species with coefficient 0 are omitted."""
    left = " + ".join(f"{n} {m.smiles}" for m, n in zip(reactants, s.reactants))
    right_terms = [f"{n} {m.smiles}" for m, n in zip(products, s.products)]
    right_terms += [f"{n} {smiles}" for smiles, n in s.aux if n]
    return f"{left} -> {' + '.join(right_terms)}"


# --- atom mapping ----------------------------------------------------------


@dataclass(frozen=True)
class ReactionAtomMap:
    """Greedy pairwise-MCS mapping between reaction sides.

    ``pairs`` holds ((reactant index, atom), (product index, atom)).
    """

    pairs: tuple[tuple[tuple[int, int], tuple[int, int]], ...]
    unmapped_reactant: tuple[tuple[int, int], ...]
    unmapped_product: tuple[tuple[int, int], ...]
    unmapped_hydrogens: int
    approximate: bool = False

    def combined(self, reactants: list[Molecule], products: list[Molecule]) -> AtomMapping:
        """The same mapping over side-global atom indices (molecules concatenated)."""
        offset_r = np.cumsum([0] + [len(m) for m in reactants]).tolist()
        offset_p = np.cumsum([0] + [len(m) for m in products]).tolist()
        return AtomMapping(
            pairs=tuple(
                sorted((offset_r[i] + a, offset_p[j] + b) for (i, a), (j, b) in self.pairs)
            ),
            approximate=self.approximate,
        )


def derive_atom_map(
    reactants: list[Molecule],
    products: list[Molecule],
    *,
    cap: int = DEFAULT_CAP,
    budget: int = DEFAULT_BUDGET,
) -> ReactionAtomMap:
    """Repeatedly commit the largest pairwise MCS among still-unmapped atoms."""
    free_r = [set(range(len(m))) for m in reactants]
    free_p = [set(range(len(m))) for m in products]
    pairs: list[tuple[tuple[int, int], tuple[int, int]]] = []
    approximate = False
    while True:
        best: tuple[int, int, AtomMapping] | None = None
        for i, r in enumerate(reactants):
            if not free_r[i]:
                continue
            for j, p in enumerate(products):
                if not free_p[j]:
                    continue
                found = mcs(
                    r, p, cap, budget, atoms_a=frozenset(free_r[i]), atoms_b=frozenset(free_p[j])
                )
                approximate = approximate or found.approximate
                if best is None or len(found) > len(best[2]):
                    best = (i, j, found)
        if best is None or len(best[2]) == 0:
            break
        i, j, found = best
        for a, b in found.pairs:
            pairs.append(((i, a), (j, b)))
            free_r[i].discard(a)
            free_p[j].discard(b)

    h_left = side_counts(reactants).get("H", 0)
    h_right = side_counts(products).get("H", 0)
    return ReactionAtomMap(
        pairs=tuple(sorted(pairs)),
        unmapped_reactant=tuple(sorted((i, a) for i, atoms in enumerate(free_r) for a in atoms)),
        unmapped_product=tuple(sorted((j, b) for j, atoms in enumerate(free_p) for b in atoms)),
        unmapped_hydrogens=max(0, h_left - h_right),
        approximate=approximate,
    )


# --- by-products -----------------------------------------------------------


@dataclass(frozen=True)
class LeavingGroup:
    name: str
    smiles: str
    molecule: Molecule

    @property
    def counts(self) -> dict[str, int]:
        return element_counts(self.molecule)

    @property
    def atom_total(self) -> int:
        return sum(self.counts.values())


def parse_leaving_groups(text: str) -> tuple[LeavingGroup, ...]:
    """Parse ``name<TAB>SMILES`` lines; every species must be charge-neutral."""
    rules: list[LeavingGroup] = []
    seen: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in raw.split("\t")]
        if len(fields) != 2:
            raise LibraryParseError(f"expected 2 tab-separated fields, got {len(fields)}", line_no)
        name, smiles = fields
        try:
            molecule = parse_smiles(smiles)
        except SmilesError as e:
            raise LibraryParseError(f"SMILES {smiles!r}: {e}", line_no) from e
        if molecule.net_charge != 0:
            raise LibraryParseError(f"leaving group {name!r} is not charge-neutral", line_no)
        if name in seen:
            raise DuplicateName(name)
        seen.add(name)
        rules.append(LeavingGroup(name, smiles, molecule))
    return tuple(rules)


def load_leaving_groups(source: Path | None = None) -> tuple[LeavingGroup, ...]:
    if source is None:
        return parse_leaving_groups(read_bundled(BUNDLED_LEAVING_GROUPS))
    try:
        text = Path(source).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise UnreadableSource(f"Cannot read leaving-group table {source}: {e}") from e
    return parse_leaving_groups(text)


@dataclass(frozen=True)
class ByProductTerm:
    name: str
    smiles: str
    count: int


@dataclass(frozen=True)
class ByProductHypothesis:
    """A tiling of the element difference by leaving groups, or the bare residue."""

    terms: tuple[ByProductTerm, ...]
    atoms: int
    species_count: int
    rule: str
    residue: dict[str, int] = field(default_factory=dict)

    @property
    def explained(self) -> bool:
        return bool(self.terms)

    @property
    def parsimony(self) -> tuple[int, int, str]:
        return (self.atoms, self.species_count, self.rule)

    def molecules(self) -> list[Molecule]:
        return [parse_smiles(t.smiles) for t in self.terms]


def _element_difference(reactants: list[Molecule], products: list[Molecule]) -> dict[str, int]:
    left = side_counts(reactants)
    right = side_counts(products)
    return {el: left.get(el, 0) - right.get(el, 0) for el in sorted(set(left) | set(right))}


def _tilings(
    remaining: dict[str, int], rules: tuple[LeavingGroup, ...], start: int, chosen: list[int]
) -> list[list[int]]:
    if not any(remaining.values()):
        return [list(chosen)]
    if len(chosen) >= MAX_BYPRODUCT_TERMS:
        return []
    found: list[list[int]] = []
    for k in range(start, len(rules)):
        counts = rules[k].counts
        if all(remaining.get(el, 0) >= n for el, n in counts.items()):
            reduced = dict(remaining)
            for el, n in counts.items():
                reduced[el] -= n
            chosen.append(k)
            found.extend(_tilings(reduced, rules, k, chosen))
            chosen.pop()
    return found


def enumerate_byproducts(
    reactants: list[Molecule],
    products: list[Molecule],
    rules: tuple[LeavingGroup, ...] | None = None,
) -> list[ByProductHypothesis]:
    """Rank leaving-group tilings of the reactant-minus-product element difference.

    A reaction that balances without auxiliaries has no by-product. Otherwise the
    difference is taken at unit coefficients.

    Raises:
        NegativeDifference: When products hold more of some element than reactants.
    """
    rules = load_leaving_groups() if rules is None else rules
    try:
        balance_stoichiometry(reactants, products)
        return []
    except (Unbalanceable, EmptySide):
        pass

    diff = _element_difference(reactants, products)
    deficits = {el: -n for el, n in diff.items() if n < 0}
    if deficits:
        raise NegativeDifference(deficits)
    surplus = {el: n for el, n in diff.items() if n > 0}
    if not surplus:
        return []

    hypotheses: list[ByProductHypothesis] = []
    for tiling in _tilings(surplus, rules, 0, []):
        multiplicity = Counter(tiling)
        terms = tuple(
            ByProductTerm(rules[k].name, rules[k].smiles, n)
            for k, n in sorted(multiplicity.items())
        )
        hypotheses.append(
            ByProductHypothesis(
                terms=terms,
                atoms=sum(rules[k].atom_total for k in tiling),
                species_count=len(tiling),
                rule="+".join(t.name for t in terms),
            )
        )
    if not hypotheses:
        return [
            ByProductHypothesis(
                terms=(),
                atoms=sum(surplus.values()),
                species_count=0,
                rule=RESIDUE_RULE,
                residue=surplus,
            )
        ]
    hypotheses.sort(key=lambda h: h.parsimony)
    return hypotheses


# --- hard checks -----------------------------------------------------------


@dataclass(frozen=True)
class CheckContext:
    reaction: Reaction
    config: ConditionConfig
    report: ReactionReport
    species: SpeciesDictionary


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    message: str


@dataclass(frozen=True)
class ConstraintReport:
    """Itemized hard-check outcomes; overall pass is their conjunction."""

    checks: tuple[CheckResult, ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    @property
    def pass_fraction(self) -> float:
        if not self.checks:
            return 1.0
        return sum(1 for c in self.checks if c.passed) / len(self.checks)

    def get(self, name: str) -> CheckResult | None:
        for check in self.checks:
            if check.name == name:
                return check
        return None


HardCheck = Callable[[CheckContext], CheckResult]
HARD_CHECKS: dict[str, HardCheck] = {}


def hard_check(name: str) -> Callable[[Callable[[CheckContext], tuple[bool, str]]], HardCheck]:
    """Register a check under ``name``; the wrapped function returns (passed, message)."""

    def register(fn: Callable[[CheckContext], tuple[bool, str]]) -> HardCheck:
        def run(ctx: CheckContext) -> CheckResult:
            passed, message = fn(ctx)
            return CheckResult(name=name, passed=passed, message=message)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        HARD_CHECKS[name] = run
        return run

    return register


@hard_check("mass_balance")
def _check_mass_balance(ctx: CheckContext) -> tuple[bool, str]:
    """Balanced coefficients exist (with the selected by-product if needed)."""
    if not ctx.report.byproduct_analysis:
        return True, "not assessed (by-product analysis disabled)"
    if ctx.report.stoichiometry is None:
        return False, "no integer stoichiometry conserves every element"
    return True, ctx.report.balanced_equation


@hard_check("charge_neutrality")
def _check_charge_neutrality(ctx: CheckContext) -> tuple[bool, str]:
    """Net charge is the same on both sides."""
    reactants = ctx.reaction.reactant_molecules()
    products = ctx.reaction.product_molecules()
    stoich = ctx.report.stoichiometry
    nu_r = stoich.reactants if stoich else [1] * len(reactants)
    nu_p = stoich.products if stoich else [1] * len(products)
    left = sum(n * m.net_charge for m, n in zip(reactants, nu_r))
    right = sum(n * m.net_charge for m, n in zip(products, nu_p))
    if left != right:
        return False, f"net charge {left:+d} on reactants vs {right:+d} on products"
    return True, f"net charge {left:+d} conserved"


@hard_check("byproduct_compatibility")
def _check_byproduct_compatibility(ctx: CheckContext) -> tuple[bool, str]:
    """An acidic by-product needs a base somewhere in the configuration."""
    acids = [s for s in ctx.report.byproduct_species() if ctx.species.has_role(s, "acid")]
    if not acids:
        return True, "no acidic by-product"
    bases = [s for s in ctx.config.species() if ctx.species.has_role(s, "base")]
    if not bases:
        return False, f"base required to capture {', '.join(acids)}"
    return True, f"{', '.join(bases)} captures {', '.join(acids)}"


@hard_check("no_reactant_duplication")
def _check_no_reactant_duplication(ctx: CheckContext) -> tuple[bool, str]:
    """No condition slot names one of the reactants."""
    reactant_smiles = set(ctx.reaction.reactants)
    reactant_keys = {canonical_key(m) for m in ctx.reaction.reactant_molecules()}
    for name in ctx.config.species():
        smiles = ctx.species.smiles(name)
        if name in reactant_smiles or smiles in reactant_smiles:
            return False, f"{name} duplicates a reactant"
        if smiles is not None and canonical_key(parse_smiles(smiles)) in reactant_keys:
            return False, f"{name} duplicates a reactant"
    return True, "condition species are distinct from reactants"


@hard_check("solvent_roles")
def _check_solvent_roles(ctx: CheckContext) -> tuple[bool, str]:
    """Known species placed in solvent slots carry the solvent tag."""
    for slot in ("solvent1", "solvent2"):
        name = getattr(ctx.config, slot)
        if name and name in ctx.species and not ctx.species.has_role(name, "solvent"):
            return False, f"{slot}={name} is not tagged as a solvent"
    return True, "solvent slots hold solvents"


def run_hard_checks(
    x: Reaction,
    c: ConditionConfig,
    report: ReactionReport,
    species: SpeciesDictionary,
    names: list[str] | None = None,
) -> ConstraintReport:
    """Evaluate the registered checks (or the named subset) in registration order."""
    ctx = CheckContext(reaction=x, config=c, report=report, species=species)
    selected = names if names is not None else list(HARD_CHECKS)
    return ConstraintReport(checks=tuple(HARD_CHECKS[name](ctx) for name in selected))
