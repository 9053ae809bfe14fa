"""Tests for transcript format checks and SFT serialization."""

import numpy as np
import pytest

from rxncond.debate import debate_match, trace_events
from rxncond.judges import HeuristicJudge, ToolCall
from rxncond.models import AGENT_ORDER, ConditionConfig
from rxncond.recall import Candidate
from rxncond.transcript import (
    SFTExample,
    check_format,
    parse_trace,
    read_sft_dump,
    render_dump,
    serialize_sft_example,
    write_sft_dump,
)

TRACE = [
    ToolCall("search", "neighbours of CC(=O)Cl.NCC>>CC(=O)NCC", "a1,a2"),
    ToolCall("memory", "board posts before micro-round 1", "3 posts"),
]


class TestCheckFormat:
    def test_well_formed(self):
        result = check_format("<search>q\nr</search>\n<memory>m\n1</memory>\nJudgement: B")
        assert result.format_ok
        assert (result.used_search, result.used_memory) == (True, True)
        assert result.judgement == "B"

    def test_alternate_spelling(self):
        assert check_format("Judgment: A").judgement == "A"

    def test_last_judgement_wins(self):
        assert check_format("Judgement: A\nJudgement: B").judgement == "B"

    def test_judgement_inside_span_is_ignored(self):
        result = check_format("<search>Judgement: A\nx</search>")
        assert not result.format_ok
        assert result.judgement is None
        assert result.used_search

    @pytest.mark.parametrize(
        "text",
        [
            "<search>q</memory> Judgement: A",
            "<search>q Judgement: A",
            "q</search> Judgement: A",
            "<search><memory>q</search></memory> Judgement: A",
        ],
    )
    def test_unbalanced(self, text):
        assert not check_format(text).format_ok

    def test_flags_survive_malformed_text(self):
        result = check_format("<memory>m</memory><search>q")
        assert not result.format_ok
        assert result.used_memory
        assert not result.used_search

    def test_nested_spans(self):
        result = check_format("<search>a<memory>b</memory></search> Judgement: A")
        assert result.format_ok

    def test_missing_judgement(self):
        assert not check_format("<search>q\nr</search>").format_ok
        assert not check_format("Judgement: C").format_ok


class TestSerialize:
    def test_target_shape(self):
        example = serialize_sft_example("CC>>CC", "|DCM||TEA|", "|THF||TEA|", TRACE, "A")
        assert example.input_text.startswith("Reaction: CC>>CC\nOption A: |DCM||TEA|\n")
        assert example.target.endswith("Judgement: A")
        assert example.target.count("<search>") == 1
        assert check_format(example.target).format_ok

    def test_trace_is_recoverable(self):
        trace = [*TRACE, ToolCall("search", "a<b & c", "line\nbreak")]
        example = serialize_sft_example("CC>>CC", "a", "b", trace, "B", reasoning=["x > y"])
        assert parse_trace(example.target) == trace
        assert check_format(example.target).judgement == "B"

    def test_invalid_judgement(self):
        with pytest.raises(ValueError):
            serialize_sft_example("CC>>CC", "a", "b", [], "tie")


class TestRoundTrip:
    SOLVENTS = ("DCM", "THF", "DMF", "MeCN", "toluene")
    REAGENTS = ("TEA", "DIPEA", "K2CO3", "pyridine", "")

    def _options(self):
        configs = [
            ConditionConfig(solvent1=s, reagent1=r) for s in self.SOLVENTS for r in self.REAGENTS
        ]
        candidates = [Candidate(c, "matched", (), 0.5) for c in configs]
        return list(zip(candidates, candidates[1:] + candidates[:1]))

    def test_match_traces_survive_serialization(self, amide_context, amide_reaction):
        panel = {role: HeuristicJudge(role) for role in AGENT_ORDER}
        pairs = self._options()
        assert len(pairs) >= 25
        runs = 0
        for index, (a, b) in enumerate(pairs * 2):
            if runs == 50:
                break
            outcome, posts = debate_match(
                f"r1-m{index}", a, b, panel, amide_context, micro_rounds=index % 3
            )
            trace = trace_events(posts)
            example = serialize_sft_example(
                amide_reaction, a.canonical_id, b.canonical_id, trace, outcome.winner
            )
            result = check_format(example.target)
            assert result.format_ok
            assert result.judgement == outcome.winner
            assert result.used_search == any(call.kind == "search" for call in trace)
            assert result.used_memory == any(call.kind == "memory" for call in trace)
            assert parse_trace(example.target) == trace
            runs += 1
        assert runs == 50

    def test_random_traces_with_markup_characters(self):
        rng = np.random.default_rng(10)
        pieces = ["a", "Z", " ", "<", ">", "&", "\n", "&lt;", "&#10;", "</search>", "Judgement: B"]

        def text():
            return "".join(pieces[int(i)] for i in rng.integers(0, len(pieces), 12))

        for _ in range(50):
            kinds = rng.choice(["search", "memory"], size=int(rng.integers(0, 6)))
            trace = [ToolCall(str(kind), text(), text()) for kind in kinds]
            judgement = "A" if rng.random() < 0.5 else "B"
            example = serialize_sft_example("CC>>CC", "a", "b", trace, judgement)
            result = check_format(example.target)
            assert result.format_ok
            assert result.judgement == judgement
            assert result.used_search == ("search" in kinds)
            assert result.used_memory == ("memory" in kinds)
            assert parse_trace(example.target) == trace


class TestDump:
    def test_dump_round_trip(self, tmp_path):
        examples = [
            serialize_sft_example("CC>>CC", "a", "b", TRACE, "A"),
            SFTExample("prompt two", "Judgement: B"),
        ]
        path = tmp_path / "sft.txt"
        write_sft_dump(examples, path)
        assert read_sft_dump(path.read_text()) == examples

    def test_delimiter_between_blocks(self):
        text = render_dump([SFTExample("p", "t"), SFTExample("q", "u")])
        assert text.count("=" * 40) == 1
        assert read_sft_dump("") == []
