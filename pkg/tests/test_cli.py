from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from faqpilot.cli import main
from faqpilot.conversation import load_transcripts


@pytest.fixture
def intents_csv(tmp_path):
    path = tmp_path / "intents.csv"
    path.write_text(
        "question,frequency\n"
        '"How do I reset my router password?",8\n'
        '"How do I lower my monthly bill?",6\n'
        '"How do I track my repair ticket status?",4\n',
        encoding="utf-8",
    )
    return path


def synth_corpus_file(tmp_path, intents_csv, name="calls.jsonl", seed=7, calls=30):
    out = tmp_path / name
    code = main(["synth", "--calls", str(calls), "--intents", str(intents_csv),
                 "--seed", str(seed), "--out", str(out)])
    assert code == 0
    return out


class TestExitCodes:
    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "faqpilot" in capsys.readouterr().out

    def test_no_verb_usage_error(self):
        assert main([]) == 2

    def test_unknown_flag_usage_error(self):
        assert main(["synth", "--bogus-flag", "1"]) == 2

    def test_unknown_verb_usage_error(self):
        assert main(["frobnicate"]) == 2

    def test_runtime_failure_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("this is not json\n", encoding="utf-8")
        code = main(["replay", "--transcripts", str(bad), "--reps", "1",
                     "--out-dir", str(tmp_path / "out")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_file_usage_error(self, tmp_path):
        assert main(["replay", "--transcripts", str(tmp_path / "absent.jsonl")]) == 2

    def test_serve_bad_config_exits_one_before_binding(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("engine: {window_size: banana}\n", encoding="utf-8")
        assert main(["serve", "--config", str(bad)]) == 1
        assert "error:" in capsys.readouterr().err


class TestSynth:
    def test_deterministic_across_runs(self, tmp_path, intents_csv):
        a = synth_corpus_file(tmp_path, intents_csv, "a.jsonl", seed=7)
        b = synth_corpus_file(tmp_path, intents_csv, "b.jsonl", seed=7)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self, tmp_path, intents_csv):
        a = synth_corpus_file(tmp_path, intents_csv, "a.jsonl", seed=7)
        b = synth_corpus_file(tmp_path, intents_csv, "c.jsonl", seed=8)
        assert a.read_bytes() != b.read_bytes()

    def test_corpus_parses(self, tmp_path, intents_csv):
        path = synth_corpus_file(tmp_path, intents_csv, calls=12)
        assert len(load_transcripts(path)) == 12

    def test_infeasible_exits_one(self, tmp_path, intents_csv, capsys):
        code = main(["synth", "--calls", "2", "--intents", str(intents_csv),
                     "--out", str(tmp_path / "x.jsonl")])
        assert code == 1


class TestMine:
    def test_mine_writes_store_and_report(self, tmp_path, intents_csv):
        corpus = synth_corpus_file(tmp_path, intents_csv, calls=40)
        out_dir = tmp_path / "mined"
        code = main(["mine", "--in", str(corpus), "--out-dir", str(out_dir),
                     "--k", "6", "--top", "10", "--scripted"])
        assert code == 0
        assert (out_dir / "faq_store.json").exists()
        report = json.loads((out_dir / "mining_report.json").read_text())
        assert report["stored"] > 0
        assert (out_dir / "filtered_questions.csv").exists()
        assert (out_dir / "representatives.csv").exists()
        assert (out_dir / "merged_representatives.csv").exists()


class TestReplayCompare:
    def test_replay_writes_reports_and_figures(self, tmp_path, intents_csv):
        corpus = synth_corpus_file(tmp_path, intents_csv, calls=12)
        out_dir = tmp_path / "replay"
        code = main(["replay", "--transcripts", str(corpus), "--reps", "2",
                     "--out-dir", str(out_dir), "--scripted"])
        assert code == 0
        rows = list(csv.DictReader(open(out_dir / "replay.csv")))
        assert len(rows) == 1
        assert int(rows[0]["runs"]) == 24  # 12 transcripts x 2 reps
        assert (out_dir / "replay.txt").exists()
        assert (out_dir / "latency.png").exists()
        assert (out_dir / "rag_savings.png").exists()

    def test_replay_via_http(self, tmp_path, intents_csv):
        corpus = synth_corpus_file(tmp_path, intents_csv, calls=10, seed=2)
        out_dir = tmp_path / "http_replay"
        code = main(["replay", "--transcripts", str(corpus), "--reps", "1",
                     "--out-dir", str(out_dir), "--scripted", "--via-http"])
        assert code == 0
        rows = list(csv.DictReader(open(out_dir / "replay.csv")))
        assert int(rows[0]["runs"]) == 10
        assert int(rows[0]["sets"]) > 0
        # measured end-to-end latency over real HTTP cannot be zero
        assert float(rows[0]["p95_ms"]) > 0.0

    def test_compare_default_profiles(self, tmp_path, intents_csv):
        corpus = synth_corpus_file(tmp_path, intents_csv, calls=10)
        mined = tmp_path / "mined"
        assert main(["mine", "--in", str(corpus), "--out-dir", str(mined),
                     "--k", "4", "--top", "10", "--scripted"]) == 0
        out_dir = tmp_path / "cmp"
        code = main(["compare", "--transcripts", str(corpus), "--reps", "1",
                     "--store", str(mined / "faq_store.json"),
                     "--out-dir", str(out_dir), "--scripted"])
        assert code == 0
        rows = list(csv.DictReader(open(out_dir / "comparison.csv")))
        labels = {r["profile"] for r in rows}
        assert labels == {"vector_search", "parallel_small_llms", "serial_large_llm"}
        by_label = {r["profile"]: r for r in rows}
        assert float(by_label["serial_large_llm"]["p95_ms"]) >= 5000.0
        assert float(by_label["parallel_small_llms"]["p95_ms"]) < 2000.0


class TestFaqCsvVerbs:
    def test_import_export_roundtrip(self, tmp_path):
        src_csv = tmp_path / "in.csv"
        src_csv.write_text(
            "qid,question,answer,frequency,source,created_at,updated_at\n"
            "Q0001,How do I reset my router?,Hold the button.,5,mined,1000,1000\n"
            "Q0002,What is the refund policy?,,3,mined,1000,1000\n",
            encoding="utf-8",
        )
        store_path = tmp_path / "store.json"
        assert main(["faq-import", "--store", str(store_path),
                     "--csv", str(src_csv)]) == 0
        out_csv = tmp_path / "out.csv"
        assert main(["faq-export", "--store", str(store_path),
                     "--csv", str(out_csv)]) == 0
        rows = list(csv.DictReader(open(out_csv)))
        assert {r["qid"] for r in rows} == {"Q0001", "Q0002"}
        assert rows[1]["answer"] == ""
