import json

import pytest

from logloom import PipelineConfig, config_digest
from logloom.cli import main

SCENARIO = {
    "duration": 1800,
    "nodes": ["a", "b"],
    "seed": 11,
    "background": [],
    "chains": [
        {
            "trigger": {"dim": "event", "msg": "config changed", "node": "a"},
            "effect": {"dim": "status", "msg": "performance degraded", "node": "b"},
            "probability": 1.0,
            "lag": [5, 10],
            "per_hour": 24,
        }
    ],
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "scenario.json").write_text(json.dumps(SCENARIO), encoding="utf-8")
    assert main(["synth", "--scenario", str(root / "scenario.json"), "--out", str(root / "data")]) == 0
    assert main(["pipeline", "--input", str(root / "data" / "log.jsonl"), "--out", str(root / "run")]) == 0
    return root


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 1

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag(self, capsys):
        assert main(["ingest"]) == 1

    def test_unreadable_input_is_2(self, tmp_path, capsys):
        assert main(["pipeline", "--input", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)]) == 2

    def test_majority_rejects_is_2(self, tmp_path, capsys):
        log = tmp_path / "log.jsonl"
        log.write_text('garbage\nmore garbage\n{"ts": 1, "node": "a", "dim": "event", "msg": "x"}\n')
        assert main(["pipeline", "--input", str(log), "--out", str(tmp_path / "out")]) == 2
        assert "rejected" in capsys.readouterr().err

    def test_unknown_config_key_is_3_and_named(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"wnidow": 120}')
        log = tmp_path / "log.jsonl"
        log.write_text('{"ts": 1, "node": "a", "dim": "event", "msg": "x"}\n')
        assert main(["pipeline", "--config", str(cfg), "--input", str(log), "--out", str(tmp_path / "o")]) == 3
        assert "wnidow" in capsys.readouterr().err

    def test_config_not_json_is_3(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{oops")
        assert main(["ingest", "--config", str(cfg), "--input", "x", "--out", str(tmp_path)]) == 3

    def test_out_of_range_value_is_3(self, tmp_path, capsys):
        log = tmp_path / "log.jsonl"
        log.write_text('{"ts": 1, "node": "a", "dim": "event", "msg": "x"}\n')
        assert main(["pipeline", "--input", str(log), "--out", str(tmp_path / "o"), "--min-sup", "2.0"]) == 3

    def test_invalid_scenario_is_3(self, tmp_path, capsys):
        bad = tmp_path / "scenario.json"
        bad.write_text('{"duration": -1, "nodes": []}')
        assert main(["synth", "--scenario", str(bad), "--out", str(tmp_path)]) == 3

    def test_schema_invalid_kb_is_3(self, tmp_path, capsys):
        kb = tmp_path / "kb.json"
        kb.write_text('{"version": 99}')
        assert main(["query", "--kb", str(kb), "--target", "status:0"]) == 3


class TestSynth:
    def test_outputs_exist(self, workdir):
        data = workdir / "data"
        assert (data / "log.jsonl").exists()
        assert (data / "truth.jsonl").exists()
        first = json.loads((data / "log.jsonl").read_text().splitlines()[0])
        assert set(first) == {"ts", "node", "dim", "msg"}


class TestPipeline:
    def test_artifacts_written(self, workdir):
        run = workdir / "run"
        for name in [
            "templates.tsv", "rejects.txt", "events.jsonl", "rules.json",
            "instances.jsonl", "graphs.json", "kb.json", "report.txt",
        ]:
            assert (run / name).exists(), name

    def test_report_lists_counts_and_timings(self, workdir, capsys):
        text = (workdir / "run" / "report.txt").read_text()
        assert "rules:" in text and "patterns:" in text and "timings:" in text

    def test_empty_log_exits_zero(self, tmp_path, capsys):
        log = tmp_path / "log.jsonl"
        log.write_text("")
        assert main(["pipeline", "--input", str(log), "--out", str(tmp_path / "out")]) == 0
        out = capsys.readouterr().out
        assert "rules: 0" in out and "patterns: 0" in out

    def test_rerun_is_byte_identical(self, workdir, tmp_path):
        log = workdir / "data" / "log.jsonl"
        assert main(["pipeline", "--input", str(log), "--out", str(tmp_path / "again")]) == 0
        for name in ["events.jsonl", "rules.json", "graphs.json", "kb.json"]:
            assert (tmp_path / "again" / name).read_bytes() == (workdir / "run" / name).read_bytes()


class TestComposability:
    def test_stagewise_equals_pipeline(self, workdir, tmp_path):
        log = workdir / "data" / "log.jsonl"
        s = tmp_path
        assert main(["ingest", "--input", str(log), "--out", str(s / "1")]) == 0
        assert main(["preprocess", "--events", str(s / "1" / "events.jsonl"), "--out", str(s / "2")]) == 0
        assert main([
            "mine-rules", "--events", str(s / "2" / "events.jsonl"),
            "--templates", str(s / "1" / "templates.tsv"), "--out", str(s / "3")]) == 0
        assert main([
            "build-graphs", "--instances", str(s / "3" / "instances.jsonl"),
            "--rules", str(s / "3" / "rules.json"), "--out", str(s / "4"), "--dot"]) == 0
        assert main([
            "mine-patterns", "--graphs", str(s / "4" / "graphs.json"),
            "--rules", str(s / "3" / "rules.json"), "--out", str(s / "5")]) == 0
        run = workdir / "run"
        assert (s / "1" / "templates.tsv").read_bytes() == (run / "templates.tsv").read_bytes()
        assert (s / "2" / "events.jsonl").read_bytes() == (run / "events.jsonl").read_bytes()
        assert (s / "3" / "rules.json").read_bytes() == (run / "rules.json").read_bytes()
        assert (s / "3" / "instances.jsonl").read_bytes() == (run / "instances.jsonl").read_bytes()
        assert (s / "4" / "graphs.json").read_bytes() == (run / "graphs.json").read_bytes()
        assert (s / "5" / "kb.json").read_bytes() == (run / "kb.json").read_bytes()
        assert "digraph window_0" in (s / "4" / "graphs.dot").read_text()

    def test_threads_do_not_change_output(self, workdir, tmp_path):
        log = workdir / "data" / "log.jsonl"
        assert main(["pipeline", "--input", str(log), "--out", str(tmp_path / "t4"), "--threads", "4"]) == 0
        assert (tmp_path / "t4" / "kb.json").read_bytes() == (workdir / "run" / "kb.json").read_bytes()


class TestFlagPrecedence:
    def test_flag_overrides_config_file(self, workdir, tmp_path, capsys):
        log = workdir / "data" / "log.jsonl"
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"min_sup": 0.5}')
        assert main(["pipeline", "--config", str(cfg), "--input", str(log), "--out", str(tmp_path / "a")]) == 0
        assert main([
            "pipeline", "--config", str(cfg), "--min-sup", "0.2",
            "--input", str(log), "--out", str(tmp_path / "b")]) == 0
        digest_a = json.loads((tmp_path / "a" / "kb.json").read_text())["metadata"]["config_digest"]
        digest_b = json.loads((tmp_path / "b" / "kb.json").read_text())["metadata"]["config_digest"]
        assert digest_a == config_digest(PipelineConfig.from_dict({"min_sup": 0.5}))
        assert digest_b == config_digest(PipelineConfig.from_dict({"min_sup": 0.2}))


class TestQuery:
    def test_ranked_table(self, workdir, capsys):
        kb = workdir / "run" / "kb.json"
        assert main(["query", "--kb", str(kb), "--target", "status:0"]) == 0
        out = capsys.readouterr().out
        lines = out.splitlines()
        assert lines[0].startswith("rank")
        assert lines[1].startswith("1")
        assert "event:0" in lines[1] and "[status:0]" in lines[1]

    def test_target_spellings_agree(self, workdir, capsys):
        kb = workdir / "run" / "kb.json"
        main(["query", "--kb", str(kb), "--target", "status:0"])
        short = capsys.readouterr().out
        main(["query", "--kb", str(kb), "--target", "status:rule:0"])
        long = capsys.readouterr().out
        assert short == long

    def test_template_target(self, workdir, capsys):
        kb = workdir / "run" / "kb.json"
        rules = json.loads(kb.read_text())["rules"]
        status_rule = next(r for r in rules if r["dim"] == "status")
        code = main(["query", "--kb", str(kb), "--target", f"status:template:{status_rule['consequent']}"])
        assert code == 0
        assert "event:0" in capsys.readouterr().out

    def test_scope_flag(self, workdir, capsys):
        kb = workdir / "run" / "kb.json"
        assert main(["query", "--kb", str(kb), "--target", "status:0", "--scope", "cross"]) == 0
        assert "event:0" in capsys.readouterr().out
        assert main(["query", "--kb", str(kb), "--target", "status:0", "--scope", "same"]) == 0
        assert "no stored pattern" in capsys.readouterr().out

    def test_malformed_target_is_usage_error(self, workdir, capsys):
        kb = workdir / "run" / "kb.json"
        assert main(["query", "--kb", str(kb), "--target", "status"]) == 1
        assert main(["query", "--kb", str(kb), "--target", "bogus:0"]) == 1
        assert main(["query", "--kb", str(kb), "--target", "status:zero"]) == 1

    def test_unresolvable_target_is_3(self, workdir, capsys):
        kb = workdir / "run" / "kb.json"
        assert main(["query", "--kb", str(kb), "--target", "status:7"]) == 3


class TestExport:
    def test_document_round_trip_bytes(self, workdir, capsys):
        kb = workdir / "run" / "kb.json"
        assert main(["export", "--kb", str(kb)]) == 0
        assert capsys.readouterr().out == kb.read_text()

    def test_dot_on_two_node_pattern(self, workdir, capsys):
        kb = workdir / "run" / "kb.json"
        assert main(["export", "--kb", str(kb), "--dot"]) == 0
        dot = capsys.readouterr().out
        blocks = [b for b in dot.split("digraph ") if b]
        two_node = next(b for b in blocks if b.count("->") == 1)
        assert two_node.count("[label=") == 3  # 2 nodes + 1 edge

    def test_output_file(self, workdir, tmp_path):
        kb = workdir / "run" / "kb.json"
        target = tmp_path / "exported.json"
        assert main(["export", "--kb", str(kb), "--output", str(target)]) == 0
        assert target.read_bytes() == kb.read_bytes()


class TestMerge:
    def test_merge_two_kbs_with_digest_warning(self, workdir, tmp_path, capsys):
        run = workdir / "run"
        log = workdir / "data" / "log.jsonl"
        assert main(["pipeline", "--input", str(log), "--out", str(tmp_path / "other"), "--min-sup", "0.05"]) == 0
        assert main([
            "merge", "--kb", str(run / "kb.json"),
            "--incoming", str(tmp_path / "other" / "kb.json"),
            "--out", str(tmp_path / "merged")]) == 0
        report = (tmp_path / "merged" / "merge_report.txt").read_text()
        assert "digests differ" in report
        assert (tmp_path / "merged" / "kb.json").exists()

    def test_merge_expert_document(self, workdir, tmp_path, capsys):
        run = workdir / "run"
        expert = tmp_path / "expert.json"
        expert.write_text(json.dumps({
            "metadata": {"source": "ops"},
            "patterns": [
                {
                    "nodes": [[0, "event", 0, 1.0], [1, "status", 0, 1.0]],
                    "edges": [[0, 1, "cross"]],
                    "knowledge_confidence": 0.99,
                },
                {
                    "nodes": [[0, "event", 0, 1.0], [1, "status", 0, 1.0]],
                    "edges": [[0, 1, "same"]],
                    "knowledge_confidence": 0.42,
                },
            ],
        }))
        assert main([
            "merge", "--kb", str(run / "kb.json"), "--incoming", str(expert),
            "--expert", "--out", str(tmp_path / "m")]) == 0
        doc = json.loads((tmp_path / "m" / "kb.json").read_text())
        cross = next(p for p in doc["patterns"] if [[0, 1, "cross"]] == p["edges"])
        same = next(p for p in doc["patterns"] if [[0, 1, "same"]] == p["edges"])
        # scores merge by max, so the mined 1.0 wins; provenance is the union
        assert cross["knowledge_confidence"] == 1.0
        assert "expert:ops" in cross["provenance"] and "mined" in cross["provenance"]
        assert same["knowledge_confidence"] == 0.42
        assert same["provenance"] == ["expert:ops"]
