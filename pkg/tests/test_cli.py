import hashlib
import io
import os

import numpy as np
import pytest

from statestream.cli import (EXIT_ATTRACTOR, EXIT_OK, EXIT_RUNTIME,
                             EXIT_USAGE, load_task_file, run)
from statestream.modelio import WeightBundle, expected_shapes, save_weights
from statestream.trace import load_fc, load_trace

# sha256 of the generate stdout for the invocation in test_generate_golden,
# frozen from a verified run (toy assets, seed 7). Regenerate with
# scripts/print_goldens.py.
GOLDEN_GENERATE_SHA = "94d5ea504555e7c7a1e8671162cf702b8d3c390cb5e4cdb275e446080417b27c"

GEN_FLAGS = ["--prompt", "hello", "--max-tokens", "24"]


def invoke(argv):
    out, err = io.BytesIO(), io.StringIO()
    code = run(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def asset_flags(toy_assets):
    return ["--weights", toy_assets["weights"], "--config", toy_assets["config"]]


class TestGenerate:
    def test_generate_golden(self, toy_assets):
        code, out, err = invoke(["generate", *asset_flags(toy_assets),
                                 "--mode", "base", "--alpha", "0",
                                 "--recursions", "0", *GEN_FLAGS])
        assert code == EXIT_OK
        assert hashlib.sha256(out).hexdigest() == GOLDEN_GENERATE_SHA
        assert "repetition kind=" in err

    def test_sst_alpha_zero_matches_base_golden(self, toy_assets):
        code, out, _ = invoke(["generate", *asset_flags(toy_assets),
                               "--mode", "sst", "--alpha", "0",
                               "--recursions", "0", *GEN_FLAGS])
        assert code == EXIT_OK
        assert hashlib.sha256(out).hexdigest() == GOLDEN_GENERATE_SHA

    def test_alpha_out_of_range_is_usage_error(self, toy_assets):
        code, _, err = invoke(["generate", *asset_flags(toy_assets),
                               "--alpha", "1.2", *GEN_FLAGS])
        assert code == EXIT_USAGE
        assert "alpha" in err

    def test_missing_weights_file_is_runtime_error(self, toy_assets):
        code, _, err = invoke(["generate", "--weights", "/nonexistent.sstw",
                               "--config", toy_assets["config"], *GEN_FLAGS])
        assert code == EXIT_RUNTIME

    def test_unknown_flag_is_usage_error(self, toy_assets):
        code, _, _ = invoke(["generate", *asset_flags(toy_assets),
                             "--frobnicate", "1"])
        assert code == EXIT_USAGE

    def test_attractor_abort_exit_code(self, tmp_path, cfg, toy_assets):
        # all-zero weights emit token 0 forever: a direct-run attractor
        zeros = WeightBundle({name: np.zeros(shape, dtype=np.float32)
                              for name, shape in expected_shapes(cfg).items()})
        wpath = tmp_path / "zeros.sstw"
        save_weights(str(wpath), zeros)
        code, out, err = invoke(["generate", "--weights", str(wpath),
                                 "--config", toy_assets["config"],
                                 "--prompt", "x", "--max-tokens", "64"])
        assert code == EXIT_ATTRACTOR
        assert "kind=attractor" in err

    def test_trace_out_written(self, toy_assets, tmp_path):
        tpath = tmp_path / "run.trace"
        code, _, _ = invoke(["generate", *asset_flags(toy_assets),
                             "--mode", "sst", "--alpha", "0.027",
                             "--recursions", "1", "--trace-out", str(tpath),
                             *GEN_FLAGS])
        assert code == EXIT_OK
        sink = load_trace(str(tpath))
        assert len(sink.events) == 24 * 2

    def test_prompt_and_prompt_file_conflict(self, toy_assets, tmp_path):
        pf = tmp_path / "p.txt"
        pf.write_bytes(b"hi")
        code, _, _ = invoke(["generate", *asset_flags(toy_assets),
                             "--prompt", "hi", "--prompt-file", str(pf)])
        assert code == EXIT_USAGE


class TestCompare:
    def test_alpha_zero_no_divergence(self, toy_assets):
        code, out, _ = invoke(["compare", *asset_flags(toy_assets),
                               "--alpha", "0", "--recursions", "0", *GEN_FLAGS])
        assert code == EXIT_OK
        text = out.decode()
        assert "first_divergence -1" in text
        assert "overall_max_abs 0" in text

    def test_alpha_nonzero_reports_divergence(self, toy_assets):
        code, out, _ = invoke(["compare", *asset_flags(toy_assets),
                               "--alpha", "0.027", "--recursions", "2",
                               "--prompt", "the quick brown fox",
                               "--max-tokens", "48"])
        assert code == EXIT_OK
        text = out.decode()
        div = int(next(ln for ln in text.splitlines()
                       if ln.startswith("first_divergence")).split()[1])
        assert div >= 0
        assert float(text.splitlines()[-3].split()[1]) > 0  # overall_max_abs

    def test_identical_weights_b_accepted(self, toy_assets):
        code, _, _ = invoke(["compare", *asset_flags(toy_assets),
                             "--weights-b", toy_assets["weights"],
                             "--alpha", "0", *GEN_FLAGS])
        assert code == EXIT_OK

    def test_differing_weights_refused(self, toy_assets, tmp_path, cfg):
        from statestream.modelio import init_random_weights
        other = tmp_path / "other.sstw"
        save_weights(str(other), init_random_weights(cfg, 99))
        code, _, err = invoke(["compare", *asset_flags(toy_assets),
                               "--weights-b", str(other), *GEN_FLAGS])
        assert code == EXIT_USAGE
        assert "identical weights" in err


class TestTrace:
    def test_base_fc_files_identical_across_passes(self, toy_assets, tmp_path):
        fc_dir = tmp_path / "fc"
        code, _, _ = invoke(["trace", *asset_flags(toy_assets),
                             "--mode", "base", "--recursions", "4",
                             "--trace-out", str(tmp_path / "b.trace"),
                             "--fc-out", str(fc_dir),
                             "--prompt", "hello", "--max-tokens", "10"])
        assert code == EXIT_OK
        step_files = sorted(fc_dir.glob("fc_step0005_pass*.txt"))
        assert len(step_files) == 5
        blobs = {f.read_bytes() for f in step_files}
        assert len(blobs) == 1

    def test_sst_fc_files_differ_across_passes(self, toy_assets, tmp_path):
        fc_dir = tmp_path / "fc"
        code, _, _ = invoke(["trace", *asset_flags(toy_assets),
                             "--mode", "sst", "--alpha", "0.027",
                             "--recursions", "4",
                             "--trace-out", str(tmp_path / "s.trace"),
                             "--fc-out", str(fc_dir),
                             "--prompt", "hello", "--max-tokens", "10"])
        assert code == EXIT_OK
        step_files = sorted(fc_dir.glob("fc_step0005_pass*.txt"))
        assert len(step_files) == 5
        blobs = {f.read_bytes() for f in step_files}
        assert len(blobs) > 1

    def test_r0_one_fc_file_per_step(self, toy_assets, tmp_path):
        fc_dir = tmp_path / "fc"
        code, _, _ = invoke(["trace", *asset_flags(toy_assets),
                             "--mode", "base", "--recursions", "0",
                             "--trace-out", str(tmp_path / "r0.trace"),
                             "--fc-out", str(fc_dir),
                             "--prompt", "hello", "--max-tokens", "8"])
        assert code == EXIT_OK
        files = sorted(fc_dir.glob("fc_step*_pass*.txt"))
        # one file per step from the first step with a two-sample window
        assert [f.name for f in files] == \
            [f"fc_step{s:04d}_pass0.txt" for s in range(1, 8)]
        load_fc(str(files[0]))  # parses


class TestMembudget:
    def test_per_token_paper_value(self):
        code, out, _ = invoke(["membudget", "--tokens", "1"])
        assert code == EXIT_OK
        text = out.decode()
        assert "262144 bytes" in text and "256 KB/token" in text

    def test_context_paper_value(self):
        code, out, _ = invoke(["membudget", "--tokens", "2048"])
        assert code == EXIT_OK
        text = out.decode()
        assert "536870912 bytes" in text and "512 MB" in text

    def test_zero_tokens(self):
        code, out, _ = invoke(["membudget", "--tokens", "0"])
        assert code == EXIT_OK
        assert "0 tokens: 0 bytes (0 B)" in out.decode()


class TestBench:
    def write_tasks(self, path, rows):
        path.write_text("".join("\t".join(r) + "\n" for r in rows))

    def test_deterministic_results_file(self, toy_assets, tmp_path):
        tasks = tmp_path / "tasks.tsv"
        self.write_tasks(tasks, [
            ("t1", "2+2=", "4", "last-integer"),
            ("t2", "what is 1+1", "2", "last-integer"),
            ("t3", "echo", "never-matches", "exact"),
        ])
        outs = []
        for name in ("r1.csv", "r2.csv"):
            out_path = tmp_path / name
            code, _, _ = invoke(["bench", *asset_flags(toy_assets),
                                 "--mode", "sst", "--alpha", "0.027",
                                 "--tasks", str(tasks), "--out", str(out_path),
                                 "--max-tokens", "8"])
            assert code == EXIT_OK
            outs.append(out_path.read_bytes())
        assert outs[0] == outs[1]
        text = outs[0].decode()
        assert text.startswith("id,phase1_answer,phase1_correct,retried,")
        assert "# aggregate items=3" in text

    def test_retry_consistency(self, toy_assets, tmp_path):
        tasks = tmp_path / "tasks.tsv"
        self.write_tasks(tasks, [("a", "xy", "zzz", "exact"),
                                 ("b", "pq", "zzz", "exact")])
        out_path = tmp_path / "r.csv"
        code, _, _ = invoke(["bench", *asset_flags(toy_assets),
                             "--tasks", str(tasks), "--out", str(out_path),
                             "--max-tokens", "6"])
        assert code == EXIT_OK
        import csv
        with open(out_path) as f:
            rows = [r for r in csv.reader(ln for ln in f if not ln.startswith("#"))]
        for row in rows[1:]:
            assert row[3] == ("0" if row[2] == "1" else "1")

    def test_malformed_lines_skipped_with_warning(self, toy_assets, tmp_path):
        tasks = tmp_path / "tasks.tsv"
        tasks.write_text("good\thi\tanswer\texact\n"
                         "broken line without tabs\n"
                         "bad\thi\tanswer\tno-such-extractor\n")
        out_path = tmp_path / "r.csv"
        code, _, err = invoke(["bench", *asset_flags(toy_assets),
                               "--tasks", str(tasks), "--out", str(out_path),
                               "--max-tokens", "4"])
        assert code == EXIT_OK
        assert err.count("skipping malformed") == 2
        assert "# aggregate items=1" in out_path.read_text()

    def test_workers_flag_same_results(self, toy_assets, tmp_path):
        tasks = tmp_path / "tasks.tsv"
        self.write_tasks(tasks, [(f"t{i}", f"item {i}", "x", "exact")
                                 for i in range(4)])
        blobs = []
        for workers, name in ((1, "w1.csv"), (3, "w3.csv")):
            out_path = tmp_path / name
            code, _, _ = invoke(["bench", *asset_flags(toy_assets),
                                 "--tasks", str(tasks), "--out", str(out_path),
                                 "--max-tokens", "4", "--workers", str(workers)])
            assert code == EXIT_OK
            blobs.append(out_path.read_bytes())
        assert blobs[0] == blobs[1]


class TestTaskFile:
    def test_duplicate_ids_skipped(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("a\tp\te\texact\na\tp2\te2\texact\n")
        warnings = []
        items = load_task_file(str(path), warn=warnings.append)
        assert len(items) == 1 and len(warnings) == 1

    def test_extractors(self):
        from statestream.generate import extract_answer
        assert extract_answer("the answer is 42.", "last-integer") == "42"
        assert extract_answer("  spaced  ", "exact") == "spaced"
        assert extract_answer("no digits", "last-integer") == ""
