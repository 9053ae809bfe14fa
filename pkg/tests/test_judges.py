"""Tests for the judge backends."""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import pytest
import requests

from rxncond.config import build_config
from rxncond.errors import BackendUnavailable
from rxncond.judges import (
    AgentDecision,
    HeuristicJudge,
    JudgeRequest,
    Post,
    RemoteJudge,
    ReplayJudge,
    build_panel,
    evidence_strength,
    peers_disagree,
    slot_agreement,
)
from rxncond.knowbase import Evidence, SignalFeatures
from rxncond.models import ConditionConfig
from rxncond.recall import Candidate

SIGNALS = SignalFeatures(
    s_cond={"solvent1": {"DCM": 1.0}, "reagent1": {"TEA": 0.5, "DIPEA": 0.5}},
)


def _candidate(solvent, reagent, priority=0.5):
    return Candidate(
        config=ConditionConfig(solvent1=solvent, reagent1=reagent),
        origin="matched",
        provenance=(),
        priority=priority,
    )


def _post(agent, choice):
    return Post("m", agent, 0, choice, 0.6, "")


def _request(context, a, b, role="Full", match_id="r1-m0"):
    return JudgeRequest(match_id, role, a, b, context)


class TestDecisions:
    def test_confidence_range(self):
        with pytest.raises(ValueError, match="confidence"):
            AgentDecision("Full", "A", 1.5)

    def test_choice(self):
        with pytest.raises(ValueError, match="choice"):
            AgentDecision("Full", "C", 0.5)

    def test_peers_disagree(self):
        prior = AgentDecision("Full", "A", 0.9)
        assert not peers_disagree(prior, [])
        assert not peers_disagree(prior, [_post("Cat", "B"), _post("Sol", "A")])
        assert peers_disagree(prior, [_post("Cat", "B"), _post("Sol", "B"), _post("Rea", "A")])

    def test_post_document(self):
        document = _post("Cat", "B").to_document()
        assert document["agent"] == "Cat"
        assert document["tools"] == []


class TestSignals:
    def test_slot_agreement_by_role(self):
        config = ConditionConfig(solvent1="DCM", reagent1="TEA")
        assert slot_agreement(SIGNALS, config, "Full") == pytest.approx(0.3)
        assert slot_agreement(SIGNALS, config, "Sol") == pytest.approx(0.45)
        assert slot_agreement(SIGNALS, config, "Rea") == pytest.approx(0.3)

    def test_empty_slot_agrees_with_empty_records(self):
        signals = SignalFeatures(s_cond={"catalyst1": {"Pd(PPh3)4": 0.25}})
        assert slot_agreement(signals, ConditionConfig(), "Cat") == pytest.approx(0.6 * 0.75)

    def test_evidence_strength(self):
        assert evidence_strength(Evidence()) == 0.0


class TestHeuristicJudge:
    def test_unknown_role(self):
        with pytest.raises(ValueError):
            HeuristicJudge("Boss")

    def test_prefers_supported_option(self, amide_context):
        context = replace(amide_context, signals=SIGNALS)
        request = _request(context, _candidate("THF", "NaOH"), _candidate("DCM", "TEA"))
        decision = HeuristicJudge("Full").init_assess(request)
        assert decision.choice == "B"
        assert decision.confidence >= context.config.neutral_prior
        assert decision.citations == tuple(context.evidence.record_ids)
        assert [t.kind for t in decision.tools] == ["search"]

    def test_tie_goes_to_smaller_id(self, amide_context):
        context = replace(amide_context, signals=SignalFeatures())
        request = _request(context, _candidate("THF", "X"), _candidate("DCM", "X"))
        decision = HeuristicJudge("Sol").init_assess(request)
        assert decision.choice == "B"
        assert decision.confidence == context.config.neutral_prior

    def test_confident_prior_is_kept(self, amide_context):
        request = _request(amide_context, _candidate("THF", "X"), _candidate("DCM", "X"))
        prior = AgentDecision("Full", "A", 0.9)
        assert HeuristicJudge("Full").refine(request, prior, [_post("Cat", "A")], 0) is prior

    def test_refine_penalizes_failed_checks(self, amide_context):
        request = _request(amide_context, _candidate("DCM", "TEA"), _candidate("toluene", "H2SO4"))
        prior = AgentDecision("Full", "B", 0.5, citations=("zz",))
        decision = HeuristicJudge("Full").refine(request, prior, [_post("Cat", "A")], 0)
        assert decision.choice == "A"
        assert decision.scores[1] < 0.0
        assert "B fails byproduct_compatibility" in decision.rationale
        assert decision.citations[0] == "zz"
        assert [t.kind for t in decision.tools] == ["memory", "search"]

    def test_widened_is_memoized(self, amide_context):
        assert amide_context.widened(10) is amide_context.widened(10)

    def test_memo_is_shared_safely_across_threads(self, amide_context, monkeypatch):
        calls = []

        def slow_checks(reaction, config, report, species):
            calls.append(config.canonical_id)
            time.sleep(0.01)
            return object()

        monkeypatch.setattr("rxncond.judges.run_hard_checks", slow_checks)
        config = ConditionConfig(solvent1="DCM", reagent1="TEA")
        with ThreadPoolExecutor(max_workers=8) as executor:
            results = list(executor.map(lambda _: amide_context.checks(config), range(32)))
        assert calls == [config.canonical_id]
        assert all(r is results[0] for r in results)


class TestReplayJudge:
    @pytest.fixture
    def script(self, tmp_path):
        path = tmp_path / "full.jsonl"
        entries = [
            {"match_id": "r1-m0", "agent_role": "Full", "micro_round": 0, "decision": "B",
             "confidence": 0.7, "citations": ["a1"]},
            {"match_id": "r1-m0", "agent_role": "Full", "micro_round": 1, "decision": "A",
             "confidence": 0.8},
        ]
        path.write_text("\n".join(json.dumps(e) for e in entries) + "\n\n")
        return path

    def test_replays_decisions(self, script, amide_context):
        judge = ReplayJudge.from_file("Full", script)
        request = _request(amide_context, _candidate("DCM", "TEA"), _candidate("THF", "TEA"))
        first = judge.init_assess(request)
        assert (first.choice, first.confidence, first.citations) == ("B", 0.7, ("a1",))
        second = judge.refine(request, first, [], 0)
        assert second.choice == "A"
        assert judge.refine(request, second, [], 1) is second

    def test_missing_decision(self, script, amide_context):
        judge = ReplayJudge.from_file("Cat", script)
        request = _request(amide_context, _candidate("DCM", "TEA"), _candidate("THF", "TEA"))
        with pytest.raises(BackendUnavailable):
            judge.init_assess(request)

    def test_invalid_script(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"match_id": "r1-m0"}\n')
        with pytest.raises(BackendUnavailable, match="bad.jsonl:1"):
            ReplayJudge.from_file("Full", path)

    def test_unreadable_script(self, tmp_path):
        with pytest.raises(BackendUnavailable):
            ReplayJudge.from_file("Full", tmp_path / "missing.jsonl")


class FakeResponse:
    def __init__(self, body):
        self.body = body

    def raise_for_status(self):
        pass

    def json(self):
        return self.body


class FakeSession:
    def __init__(self, body=None, error=None):
        self.body = body
        self.error = error
        self.sent = []

    def post(self, url, json, timeout):
        self.sent.append((url, json, timeout))
        if self.error is not None:
            raise self.error
        return FakeResponse(self.body)


class TestRemoteJudge:
    def test_decision_from_response(self, amide_context):
        session = FakeSession(
            {"decision": "A", "confidence": 0.75, "citations": ["a1", "ghost"], "rationale": "ok"}
        )
        judge = RemoteJudge("Sol", "http://judge.local/assess", timeout=5, session=session)
        request = _request(amide_context, _candidate("DCM", "TEA"), _candidate("THF", "TEA"))
        decision = judge.init_assess(request)
        assert (decision.choice, decision.confidence) == ("A", 0.75)
        assert decision.citations == ("a1",)
        url, payload, timeout = session.sent[0]
        assert (url, timeout) == ("http://judge.local/assess", 5)
        assert payload["agent_role"] == "Sol"
        assert payload["micro_round"] == 0
        assert payload["option_a"]["solvent1"] == "DCM"

    def test_refine_sends_peers(self, amide_context):
        session = FakeSession({"decision": "B", "confidence": 0.6})
        judge = RemoteJudge("Sol", "http://judge.local", session=session)
        request = _request(amide_context, _candidate("DCM", "TEA"), _candidate("THF", "TEA"))
        judge.refine(request, AgentDecision("Sol", "A", 0.5), [_post("Full", "B")], 1)
        payload = session.sent[0][1]
        assert payload["micro_round"] == 2
        assert [p["agent"] for p in payload["peer_posts"]] == ["Full"]

    def test_connection_error(self, amide_context):
        session = FakeSession(error=requests.ConnectionError("refused"))
        judge = RemoteJudge("Sol", "http://judge.local", session=session)
        request = _request(amide_context, _candidate("DCM", "TEA"), _candidate("THF", "TEA"))
        with pytest.raises(BackendUnavailable, match="refused"):
            judge.init_assess(request)

    def test_malformed_response(self, amide_context):
        judge = RemoteJudge("Sol", "http://judge.local", session=FakeSession({"decision": "C"}))
        request = _request(amide_context, _candidate("DCM", "TEA"), _candidate("THF", "TEA"))
        with pytest.raises(BackendUnavailable):
            judge.init_assess(request)


class TestPanel:
    def test_default_panel(self):
        panel = build_panel(build_config({}))
        assert list(panel) == ["Full", "Cat", "Sol", "Rea"]
        assert all(isinstance(j, HeuristicJudge) for j in panel.values())

    def test_configured_backends(self, tmp_path):
        script = tmp_path / "cat.jsonl"
        script.write_text("")
        config = build_config(
            {
                "panel": ["Cat", "Sol"],
                "judges": {"Cat": f"replay:{script}", "Sol": "remote:http://judge.local:8080"},
            }
        )
        panel = build_panel(config)
        assert isinstance(panel["Cat"], ReplayJudge)
        assert isinstance(panel["Sol"], RemoteJudge)
        assert panel["Sol"].endpoint == "http://judge.local:8080"
