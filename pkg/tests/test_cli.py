from __future__ import annotations

import csv
import json
import os

import numpy as np
import pytest
import yaml

from ctxner.cli import main
from ctxner.corpus import ParseConfig, parse_conll
from ctxner.windowing import WindowConfig, position_sweep

from oracles import chunk_spans

IOB1_LATIN1 = "Jos\xe9 I-PER\nvisita O\nLyon I-LOC\n\nAna I-PER\n"


def run(argv) -> int:
    return main(argv)


class TestConvert:
    def test_iob1_latin1_to_iob2_utf8(self, tmp_path):
        src = tmp_path / "in.conll"
        src.write_bytes(IOB1_LATIN1.encode("latin-1"))
        dst = tmp_path / "out.conll"
        assert run(["convert", str(src), str(dst), "--encoding", "latin-1"]) == 0
        text = dst.read_text(encoding="utf-8")
        assert "Jos\xe9 B-PER" in text
        before = [t.split()[1] for t in IOB1_LATIN1.splitlines() if t]
        after = [l.split()[1] for l in text.splitlines() if l and not l.startswith("-DOCSTART-")]
        assert chunk_spans(after) == chunk_spans(before)

    def test_already_iob2_content_identical(self, tmp_path):
        src = tmp_path / "in.conll"
        src.write_text("John B-PER\nSmith I-PER\n\nrain O\n")
        dst = tmp_path / "out.conll"
        assert run(["convert", str(src), str(dst)]) == 0
        assert parse_conll(dst.read_text()) == parse_conll(src.read_text())

    def test_malformed_line_number_on_stderr(self, tmp_path, capsys):
        src = tmp_path / "in.conll"
        src.write_text("a O\nbroken\n")
        dst = tmp_path / "out.conll"
        assert run(["convert", str(src), str(dst)]) == 2
        assert "line 2" in capsys.readouterr().err


class TestStats:
    def test_json_fields(self, tmp_path, capsys):
        src = tmp_path / "in.conll"
        src.write_text("a B-PER\nb I-PER\n\nc O\n")
        assert run(["stats", str(src)]) == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["token_count"] == 3
        assert stats["entity_count"] == 1
        assert stats["per_type_counts"] == {"PER": 1}
        assert stats["sentence_count"] == 2


class TestWindowsPredictAggregateEval:
    def test_pipeline_composes(self, project, tmp_path, capsys):
        config = str(project())
        windows = tmp_path / "w.jsonl"
        probs = tmp_path / "p.npy"
        pred = tmp_path / "pred.conll"
        assert run(["windows", "--config", config, "--strategy", "first",
                    "--out", str(windows)]) == 0
        assert run(["predict", "--config", config, "--windows", str(windows),
                    "--out", str(probs)]) == 0
        assert run(["aggregate", "--config", config, "--windows", str(windows),
                    "--probs", str(probs), "--decider", "cmv-vote",
                    "--out", str(pred)]) == 0
        assert run(["eval", str(pred)]) == 0
        out = capsys.readouterr().out
        assert "precision:" in out and "FB1:" in out

    def test_training_export_weights(self, project, tmp_path):
        config = str(project())
        windows = tmp_path / "w.jsonl"
        assert run(["windows", "--config", config, "--strategy", "first",
                    "--labels", "--out", str(windows)]) == 0
        first = json.loads(windows.read_text().splitlines()[0])
        assert len(first["label_ids"]) == len(first["piece_ids"])
        by_kind = {}
        for kind, weight in zip(first["item_kinds"], first["weights"]):
            by_kind.setdefault(kind, set()).add(weight)
        assert by_kind["CLS"] == {0}
        assert by_kind.get("PAD", {0}) == {0}
        assert by_kind["SEP"] == {1}
        assert by_kind["PIECE"] == {1}

    def test_predict_shape(self, project, tmp_path):
        config = str(project(max_seq_len=32))
        windows = tmp_path / "w.jsonl"
        probs = tmp_path / "p.npy"
        run(["windows", "--config", config, "--strategy", "single", "--out", str(windows)])
        run(["predict", "--config", config, "--windows", str(windows), "--out", str(probs)])
        arr = np.load(probs)
        n_examples = len(windows.read_text().splitlines())
        assert arr.shape[0] == n_examples
        assert arr.shape[1] == 32
        assert np.allclose(arr.sum(axis=2), 1.0, atol=1e-6)


class TestRun:
    def test_reports_and_manifest(self, project, tmp_path):
        config = str(project())
        out = tmp_path / "out"
        assert run(["run", "--config", config, "--out", str(out)]) == 0
        for strategy in ("single", "first", "cmv-vote", "cmv-sum"):
            assert (out / f"{strategy}.pred.conll").exists()
            report = json.loads((out / f"{strategy}.report.json").read_text())
            assert 0.0 <= report["overall"]["f1"] <= 100.0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["outputs"]) == 12
        for path in manifest["outputs"].values():
            assert os.path.exists(path)

    def test_cmv_with_single_windows_guard(self, project, tmp_path, capsys):
        config = str(project(window_strategy="single", strategies=["cmv-vote"]))
        out = tmp_path / "out"
        assert run(["run", "--config", config, "--out", str(out)]) == 2
        assert "multi-context" in capsys.readouterr().err

    def test_determinism_byte_identical(self, project, tmp_path):
        config = str(project())
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run(["run", "--config", config, "--out", str(out_a)]) == 0
        assert run(["run", "--config", config, "--out", str(out_b)]) == 0
        names = [
            f"{s}.{kind}"
            for s in ("single", "first", "cmv-vote", "cmv-sum")
            for kind in ("pred.conll", "report.json", "report.txt")
        ]
        for name in names:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


class TestPositions:
    def test_csv_shape_and_variation(self, project, tmp_path):
        config = str(project(n_sentences=30, n_docs=3, max_seq_len=64))
        out = tmp_path / "positions.csv"
        assert run(["positions", "--config", config, "--out", str(out)]) == 0
        with open(out) as f:
            rows = list(csv.DictReader(f))
        expected = position_sweep(WindowConfig(max_seq_len=64, position_interval=32))
        assert [int(r["position"]) for r in rows] == expected
        assert all(set(r) == {"position", "mean_f1", "stddev", "n"} for r in rows)
        f1s = [float(r["mean_f1"]) for r in rows]
        assert len(set(f1s)) > 1  # position-dependent noise moves the metric

    def test_single_repetition_zero_stddev(self, project, tmp_path):
        config_path = project(n_sentences=12, n_docs=2, max_seq_len=32, repetitions=1)
        out = tmp_path / "positions.csv"
        assert run(["positions", "--config", str(config_path), "--out", str(out)]) == 0
        with open(out) as f:
            rows = list(csv.DictReader(f))
        assert all(float(r["stddev"]) == 0.0 for r in rows)
        assert all(int(r["n"]) == 1 for r in rows)


class TestSweep:
    def grid(self):
        return {"learning_rates": [1e-5, 2e-5], "batch_sizes": [2], "epochs": [1]}

    def test_counts_ties_and_artifacts(self, project, tmp_path, sidecar_double):
        url, handler = sidecar_double("uniform")
        config = str(project(
            n_sentences=8, n_docs=2, max_seq_len=32,
            backend={"type": "remote", "endpoint": url},
            grid=self.grid(), repetitions=2,
        ))
        out = tmp_path / "sweep"
        assert run(["sweep", "--config", config, "--out", str(out)]) == 0
        finetunes = [c for c in handler.calls if c[0] == "/finetune"]
        assert len(finetunes) == 4  # 2 cells x 2 repetitions
        best = json.loads((out / "best.json").read_text())
        # uniform probabilities tie all cells; lexicographic break -> lowest lr
        assert best["learning_rate"] == 1e-5
        with open(out / "sweep.csv") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2

    def test_single_cell_single_repetition(self, project, tmp_path, sidecar_double):
        url, _ = sidecar_double("uniform")
        config = str(project(
            n_sentences=8, n_docs=2, max_seq_len=32,
            backend={"type": "remote", "endpoint": url},
            grid={"learning_rates": [2e-5], "batch_sizes": [2], "epochs": [1]},
            repetitions=1,
        ))
        out = tmp_path / "sweep"
        assert run(["sweep", "--config", config, "--out", str(out)]) == 0
        best = json.loads((out / "best.json").read_text())
        assert best["epochs"] == 1 and len(best["f1s"]) == 1

    def test_mock_backend_rejected(self, project, tmp_path, capsys):
        config = str(project())
        assert run(["sweep", "--config", config, "--out", str(tmp_path / "s")]) == 2
        assert "remote" in capsys.readouterr().err

    def test_paper_grid_requests_240_runs(self, project, tmp_path, sidecar_double):
        url, handler = sidecar_double("uniform")
        config = str(project(
            n_sentences=4, n_docs=2, max_seq_len=16,
            backend={"type": "remote", "endpoint": url},
            repetitions=5,  # default grid: 3 x 4 x 4 cells
        ))
        out = tmp_path / "sweep"
        assert run(["sweep", "--config", config, "--out", str(out)]) == 0
        finetunes = [c for c in handler.calls if c[0] == "/finetune"]
        assert len(finetunes) == 240
        with open(out / "sweep.csv") as f:
            assert len(list(csv.DictReader(f))) == 48

    def test_resumable_after_midsweep_failure(self, project, tmp_path, sidecar_double):
        url, handler = sidecar_double("uniform")
        handler.finetune_fail_after = 2  # first cell (2 reps) succeeds, then fail
        config = str(project(
            n_sentences=8, n_docs=2, max_seq_len=32,
            backend={"type": "remote", "endpoint": url},
            grid=self.grid(), repetitions=2,
        ))
        out = tmp_path / "sweep"
        assert run(["sweep", "--config", config, "--out", str(out)]) == 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["completed"]) == 1
        handler.finetune_fail_after = None
        before = handler.finetune_count
        assert run(["sweep", "--config", config, "--out", str(out)]) == 0
        assert handler.finetune_count - before == 2  # only the missing cell reruns
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["completed"]) == 2


class TestUsage:
    def test_unknown_command_exit_code(self):
        assert run(["frobnicate"]) == 1

    def test_missing_required_flag(self):
        assert run(["windows"]) == 1

    def test_version_flag(self, capsys):
        assert run(["--version"]) == 0


class TestBackendFailuresExitCode:
    def test_unreachable_endpoint(self, project, tmp_path, capsys):
        config = str(project(
            n_sentences=8, n_docs=2, max_seq_len=32,
            backend={"type": "remote", "endpoint": "http://127.0.0.1:9"},
            strategies=["first"],
        ))
        out = tmp_path / "out"
        assert run(["run", "--config", config, "--out", str(out)]) == 3
        assert "backend error" in capsys.readouterr().err
