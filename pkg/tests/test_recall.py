"""Tests for multi-channel recall and pool construction."""

import warnings

import numpy as np
import pytest

from rxncond.analysis import analyze_reaction
from rxncond.config import PipelineConfig
from rxncond.knowbase import Evidence, EvidenceItem, Facets, ingest
from rxncond.models import SLOTS, ConditionConfig, Reaction
from rxncond.recall import (
    DEFAULT_POOL_CAP,
    Candidate,
    build_pool,
    feasibility_filter,
    matched_candidates,
    merge_matched,
    recall,
    recall_channels,
    recombine,
    slot_alternatives,
)


@pytest.fixture
def base(mini_corpus_lines, library, species, leaving_groups):
    lines = [
        *mini_corpus_lines,
        '{"id": "a3", "reaction_type": "amide_coupling", "reactants": ["CC(=O)Cl", "NCCC"], '
        '"products": ["CC(=O)NCCC"], "solvent1": "DCM", "reagent1": "TEA"}',
    ]
    built, _ = ingest(lines, library=library, species=species, leaving_groups=leaving_groups)
    return built


def _item(record_id, score):
    return EvidenceItem(record_id, score, Facets(False, score, score, score))


def _candidate(solvent, reagent, priority=0.5, channels=("type",), origin="matched"):
    return Candidate(
        config=ConditionConfig(solvent1=solvent, reagent1=reagent),
        origin=origin,
        provenance=("r",),
        priority=priority,
        channels=frozenset(channels),
    )


SOLVENTS = ("DCM", "THF", "DMF", "MeCN", "toluene")
REAGENTS = ("TEA", "DIPEA", "K2CO3", "")


def _random_candidates(rng, n, origin):
    candidates = []
    for _ in range(n):
        channels = ("type", "reactant", "product")
        picked = [c for c in channels if rng.random() < 0.5] or ["type"]
        candidates.append(
            _candidate(
                SOLVENTS[int(rng.integers(len(SOLVENTS)))],
                REAGENTS[int(rng.integers(len(REAGENTS)))],
                # two decimals so equal priorities are common
                priority=round(float(rng.random()), 2),
                channels=picked if origin == "matched" else (),
                origin=origin,
            )
        )
    return candidates


def _expected_pool_ids(matched, similar, cap):
    stream = sorted(
        matched, key=lambda c: (-len(c.channels), -round(c.priority, 12), c.canonical_id)
    ) + sorted(similar, key=lambda c: (-round(c.priority, 12), c.canonical_id))
    ids = list(dict.fromkeys(c.canonical_id for c in stream))
    return ids[:cap]


class TestRecallProperties:
    def test_merge_is_an_exact_union(self):
        rng = np.random.default_rng(500)
        universe = [f"r{i:02d}" for i in range(30)]
        for _ in range(500):
            s_t = {rid for rid in universe if rng.random() < 0.2}
            reactant_ids = [rid for rid in universe if rng.random() < 0.2]
            s_r = Evidence(tuple(_item(rid, float(rng.random())) for rid in reactant_ids))
            product_ids = [rid for rid in universe if rng.random() < 0.2]
            if rng.random() < 0.5:
                s_p = Evidence(tuple(_item(rid, float(rng.random())) for rid in product_ids))
            else:
                s_p = product_ids
            merged = merge_matched(s_t, s_r, s_p)

            assert list(merged) == sorted(s_t | set(reactant_ids) | set(product_ids))
            channel_ids = {"type": s_t, "reactant": set(reactant_ids), "product": set(product_ids)}
            for rid, hit in merged.items():
                expected = {name for name, ids in channel_ids.items() if rid in ids}
                assert hit.record_id == rid
                assert hit.channels == expected
                scores = [item.score for item in s_r.items if item.record_id == rid]
                if isinstance(s_p, Evidence):
                    scores += [item.score for item in s_p.items if item.record_id == rid]
                assert hit.score == max(scores, default=0.0)

    def test_pool_is_deduplicated_ordered_and_capped(self):
        rng = np.random.default_rng(5000)
        for _ in range(500):
            matched = _random_candidates(rng, int(rng.integers(0, 12)), "matched")
            similar = _random_candidates(rng, int(rng.integers(0, 12)), "similar")
            cap = int(rng.integers(1, 16))
            pool = build_pool(matched, similar, cap=cap)

            assert pool.ids == _expected_pool_ids(matched, similar, cap)
            assert len(pool) == min(cap, len({c.canonical_id for c in matched + similar}))
            inputs = matched + similar
            assert all(any(c is entry for entry in inputs) for c in pool)
            origins = [c.origin for c in pool]
            assert origins == sorted(origins, key=lambda o: o != "matched")
            matched_ids = {c.canonical_id for c in matched}
            assert all(c.origin == "matched" for c in pool if c.canonical_id in matched_ids)

    def test_variants_are_admitted_soundly(self):
        rng = np.random.default_rng(55)
        for _ in range(500):
            parents = build_pool(_random_candidates(rng, int(rng.integers(1, 6)), "matched"), [])
            alternatives = {
                "solvent1": [(s, round(float(rng.random()), 2)) for s in SOLVENTS[:3]],
                "reagent1": [(r, round(float(rng.random()), 2)) for r in REAGENTS[:2]],
            }
            limit = int(rng.integers(1, 20))
            variants = recombine(list(parents), alternatives, limit=limit)

            parent_ids = {c.canonical_id: c for c in parents}
            ids = [v.canonical_id for v in variants]
            assert len(ids) == len(set(ids)) <= limit
            assert not set(ids) & set(parent_ids)
            for variant in variants:
                parent = parent_ids[variant.parent]
                assert variant.origin == "similar"
                assert variant.provenance == parent.provenance
                changed = tuple(
                    slot
                    for slot in SLOTS
                    if getattr(variant.config, slot) != getattr(parent.config, slot)
                )
                assert changed == variant.replaced
                assert 1 <= len(changed) <= 2

    def test_default_cap_holds_for_large_inputs(self):
        rng = np.random.default_rng(6)
        for size in (5001, 6000, 7500):
            matched = [
                Candidate(
                    config=ConditionConfig(solvent1=f"S{i}", reagent1="TEA"),
                    origin="matched",
                    provenance=("r",),
                    priority=float(rng.random()),
                    channels=frozenset({"type"}),
                )
                for i in range(size)
            ]
            pool = build_pool(matched, matched[:100])
            assert len(pool) == DEFAULT_POOL_CAP == pool.cap
            assert len(set(pool.ids)) == DEFAULT_POOL_CAP


class TestMatched:
    def test_merge_records_channels(self):
        merged = merge_matched(
            {"a", "b"}, Evidence((_item("a", 0.5), _item("c", 0.8))), ["c"]
        )
        assert list(merged) == ["a", "b", "c"]
        assert merged["a"].channels == {"type", "reactant"}
        assert merged["b"].score == 0.0
        assert merged["c"].channels == {"reactant", "product"}
        assert merged["c"].score == 0.8

    def test_candidates_group_by_config(self, base):
        matched = merge_matched({"a1", "a2", "a3"}, Evidence(), Evidence())
        candidates = matched_candidates(matched, base)
        by_id = {c.canonical_id: c for c in candidates}
        assert set(by_id) == {"|DCM||TEA|", "|DCM||DIPEA|"}
        assert by_id["|DCM||TEA|"].provenance == ("a1", "a3")
        assert all(c.origin == "matched" for c in candidates)

    def test_feasibility_filter(self, base):
        matched = merge_matched({"a1", "a2", "e1"}, Evidence(), Evidence())
        kept = feasibility_filter(matched, base, lambda c: c.reagent1 != "DIPEA")
        assert set(kept) == {"a1", "e1"}
        assert feasibility_filter(matched, base, None) == matched


class TestChannels:
    def test_three_channels(self, base):
        reaction = Reaction.parse("CC(=O)Cl.NCC>>CC(=O)NCC")
        sets = recall_channels(
            base,
            "amide_coupling",
            reaction.reactant_molecules(),
            reaction.product_molecules(),
            k=2,
        )
        assert sets.type_ids == {"a1", "a2", "a3"}
        assert len(sets.reactant.items) <= 2
        assert set(sets.product.record_ids) <= {"a1", "a2", "a3", "e1", "e2"}

    def test_empty_products_leave_channel_empty(self, base):
        reaction = Reaction.parse("CC(=O)Cl.NCC>>CC(=O)NCC")
        sets = recall_channels(base, "unknown", reaction.reactant_molecules(), [], k=3)
        assert sets.type_ids == frozenset()
        assert sets.product.items == ()


class TestRecombine:
    def test_one_slot_variants(self):
        parent = _candidate("DCM", "TEA")
        variants = recombine(
            [parent], {"reagent1": [("TEA", 1.0), ("DIPEA", 0.5)]}, limit=10
        )
        assert [v.config.reagent1 for v in variants] == ["DIPEA"]
        (variant,) = variants
        assert variant.origin == "similar"
        assert variant.parent == parent.canonical_id
        assert variant.replaced == ("reagent1",)
        assert variant.priority == 0.5

    def test_two_slot_variants_follow_single_ones(self):
        parent = _candidate("DCM", "TEA")
        alternatives = {"solvent1": [("THF", 1.0)], "reagent1": [("DIPEA", 1.0)]}
        variants = recombine([parent], alternatives, limit=10)
        assert [v.replaced for v in variants] == [
            ("solvent1",),
            ("reagent1",),
            ("solvent1", "reagent1"),
        ]

    def test_no_duplicates_of_matched(self):
        first, second = _candidate("DCM", "TEA"), _candidate("DCM", "DIPEA")
        variants = recombine([first, second], {"reagent1": [("TEA", 1.0), ("DIPEA", 1.0)]}, 10)
        assert variants == []

    def test_caps(self):
        parent = _candidate("DCM", "TEA")
        alternatives = {"solvent1": [("THF", 1.0), ("DMF", 0.5)], "reagent1": [("DIPEA", 1.0)]}
        assert len(recombine([parent], alternatives, limit=1)) == 1
        assert len(recombine([parent], alternatives, limit=10, variant_cap=2)) == 2
        assert recombine([parent], alternatives, limit=10, variant_cap=0) == []

    def test_infeasible_variants_dropped(self):
        parent = _candidate("DCM", "TEA")
        variants = recombine(
            [parent],
            {"solvent1": [("THF", 1.0)], "reagent1": [("DIPEA", 1.0)]},
            limit=10,
            feasible=lambda c: c.reagent1 != "DIPEA",
        )
        assert [v.config.solvent1 for v in variants] == ["THF"]

    def test_slot_alternatives(self, base):
        alternatives = slot_alternatives(base, "amide_coupling", [], per_slot=2)
        assert alternatives["reagent1"] == [("TEA", 1.0), ("DIPEA", 0.5)]
        assert alternatives["solvent1"] == [("DCM", 1.0)]
        assert "catalyst1" not in alternatives


class TestPool:
    def test_order_and_cap(self):
        matched = [
            _candidate("DCM", "TEA", 0.9, ("type",)),
            _candidate("THF", "TEA", 0.2, ("type", "reactant")),
        ]
        similar = [_candidate("DMF", "TEA", 0.99, origin="similar")]
        pool = build_pool(matched, similar, cap=10)
        assert pool.ids == ["|THF||TEA|", "|DCM||TEA|", "|DMF||TEA|"]
        assert len(build_pool(matched, similar, cap=2)) == 2

    def test_deduplicates(self):
        pool = build_pool([_candidate("DCM", "TEA")], [_candidate("DCM", "TEA", origin="similar")])
        assert len(pool) == 1
        assert pool.candidates[0].origin == "matched"

    def test_document(self):
        pool = build_pool([_candidate("DCM", "TEA")], [], cap=5)
        document = pool.to_document()
        assert document["cap"] == 5
        assert document["candidates"][0]["channels"] == ["type"]
        assert pool.get("|DCM||TEA|").priority == 0.5
        with pytest.raises(KeyError):
            pool.get("nothing")


class TestRecall:
    def _report(self, base, library, leaving_groups, text="CC(=O)Cl.NCC>>CC(=O)NCC"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return analyze_reaction(
                Reaction.parse(text), base, library, leaving_groups, PipelineConfig()
            ).report

    def test_pool_invariants(self, base, library, species, leaving_groups):
        reaction = Reaction.parse("CC(=O)Cl.NCC>>CC(=O)NCC")
        report = self._report(base, library, leaving_groups)
        config = PipelineConfig(pool_cap=6)
        result = recall(reaction, report, base, species, config)
        ids = result.pool.ids
        assert len(ids) == len(set(ids)) <= 6
        origins = [c.origin for c in result.pool]
        assert origins == sorted(origins, key=lambda o: o != "matched")
        assert set(ids[:2]) == {"|DCM||TEA|", "|DCM||DIPEA|"}

    def test_feasibility_filter_drops_failing_records(self, base, library, species, leaving_groups):
        reaction = Reaction.parse("CC(=O)Cl.NCC>>CC(=O)NCC")
        report = self._report(base, library, leaving_groups)
        result = recall(reaction, report, base, species, PipelineConfig())
        # toluene/H2SO4 records carry no base for the HCl by-product
        assert "e1" not in result.matched
        assert "|toluene||H2SO4|" not in result.pool.ids

    def test_filter_can_be_disabled(self, base, library, species, leaving_groups):
        reaction = Reaction.parse("CC(=O)Cl.NCC>>CC(=O)NCC")
        report = self._report(base, library, leaving_groups)
        config = PipelineConfig(feasibility_filter=False, k_per_channel=8)
        result = recall(reaction, report, base, species, config)
        assert "|toluene||H2SO4|" in result.pool.ids
