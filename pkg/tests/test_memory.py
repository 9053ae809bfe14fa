"""Tests for the run store and its manifest."""

import hashlib
import json

from rxncond import __version__
from rxncond.manifest import build_manifest
from rxncond.memory import RunStore, canonical_json, write_text_atomic
from rxncond.models import ConditionConfig


class TestCanonicalJson:
    def test_sorted_and_terminated(self):
        expected = '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'
        assert canonical_json({"b": 1, "a": [1, 2]}) == expected

    def test_models_are_dumped(self):
        text = canonical_json(ConditionConfig(solvent1="DCM"))
        assert json.loads(text)["solvent1"] == "DCM"


class TestRunStore:
    def test_memory_only(self):
        store = RunStore()
        store.put("report.json", {"x": 1})
        assert "report.json" in store
        assert store.get("report.json") == {"x": 1}
        assert store.flush(config_digest="0" * 64) == []

    def test_flush_writes_documents_then_manifest(self, tmp_path):
        store = RunStore(tmp_path / "run")
        store.put("pool.json", {"size": 0})
        store.put("board.json", {"matches": {}})
        written = store.flush(config_digest="ab" * 32, command=["recall", "CC>>CC"])
        assert [p.name for p in written] == ["board.json", "pool.json", "manifest.json"]
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["config_sha256"] == "ab" * 32
        assert manifest["command"] == ["recall", "CC>>CC"]
        pool_bytes = (tmp_path / "run" / "pool.json").read_bytes()
        assert manifest["files"]["pool.json"] == hashlib.sha256(pool_bytes).hexdigest()

    def test_identical_runs_identical_bytes(self, tmp_path):
        for name in ("one", "two"):
            store = RunStore(tmp_path / name)
            store.put("report.json", {"reaction_type": "amide_coupling"})
            store.flush(config_digest="c" * 64)
        for name in ("report.json", "manifest.json"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


class TestManifest:
    def test_fields(self, tmp_path):
        path = tmp_path / "a.json"
        write_text_atomic(path, "{}\n")
        manifest = build_manifest(files=[path], root=tmp_path, config_digest="d" * 64)
        assert manifest["manifest_version"] == 1
        assert manifest["tool"] == {"name": "rxncond", "version": __version__}
        assert list(manifest["files"]) == ["a.json"]
        assert "command" not in manifest

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        write_text_atomic(tmp_path / "nested" / "out.txt", "x")
        assert [p.name for p in (tmp_path / "nested").iterdir()] == ["out.txt"]
