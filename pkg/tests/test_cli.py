import csv
import json

import numpy as np
import pytest

from nat_bench.cli import main
from nat_bench.grid import read_sgrid, uniform, write_sgrid
from nat_bench.metrics import kld


def run(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def snapshot(directory):
    """Bytes of every output file except the manifest, which records paths."""
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != "manifest.json"}


@pytest.fixture
def data(tmp_path):
    out = tmp_path / "data"
    assert run("synth", "--frames", 4, "--observers", 6, "--grid", "12x10", "--videos", 2,
               "--component-sigma", "1.5,2.5", "--seed", 3, "--out", out) == 0
    return out


class TestSynth:
    def test_counts(self, tmp_path):
        out = tmp_path / "s"
        assert run("synth", "--frames", 10, "--observers", 5, "--grid", "64x64", "--seed", 7, "--out", out) == 0
        assert len(list(out.glob("truth_*.sgrid"))) == 10
        assert len(rows(out / "fixations.csv")) == 50
        assert read_sgrid(out / "truth_00000.sgrid").shape == (64, 64)

    def test_rerun_is_byte_identical(self, tmp_path):
        args = ["synth", "--frames", 3, "--grid", "16x8", "--seed", 7, "--out"]
        run(*args, tmp_path / "a")
        run(*args, tmp_path / "b")
        assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")

    def test_zero_observers_is_usage_error(self, tmp_path, capsys):
        assert run("synth", "--observers", 0, "--out", tmp_path) == 2
        assert "--observers" in capsys.readouterr().err

    def test_bad_grid(self, tmp_path, capsys):
        assert run("synth", "--grid", "8y8", "--out", tmp_path) == 2
        assert "--grid" in capsys.readouterr().err


class TestStats:
    def test_defaults(self, data, tmp_path):
        out = tmp_path / "st"
        assert run("stats", "--input", data / "fixations.csv", "--grid", "12x10", "--out", out) == 0
        table = rows(out / "stats.csv")
        assert len(table) == 4
        assert {r["m"] for r in table} == {"10"}
        assert {r["discrepancy"] for r in table} == {"kld"}

    def test_mixed_discrepancy(self, data, tmp_path):
        out = tmp_path / "st"
        assert run("stats", "--input", data / "fixations.csv", "--grid", "12x10",
                   "--discrepancy", "mix:1,0.1,0.1", "--out", out) == 0
        assert {r["discrepancy"] for r in rows(out / "stats.csv")}.pop().startswith("mix")

    def test_empty_fixation_file(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("frame_id,observer_id,col,row\n")
        assert run("stats", "--input", empty, "--grid", "8x8", "--out", tmp_path / "o") == 1

    def test_missing_input_is_usage_error(self, tmp_path):
        assert run("stats", "--out", tmp_path) == 2


class TestTrainCompare:
    def test_train_both(self, data, tmp_path):
        out = tmp_path / "tr"
        assert run("train", "--data", data, "--grid", "12x10", "--iterations", 60, "--out", out) == 0
        modes = [r["mode"] for r in rows(out / "curves.csv")]
        assert set(modes) == {"tt", "nat"}
        assert len(list(out.glob("predicted_nat_*.sgrid"))) == 4

    def test_compare_shape(self, tmp_path):
        out = tmp_path / "cmp"
        assert run("compare", "--n", 3, "--n", 30, "--frames", 50, "--mode", "both", "--grid", "8x8",
                   "--iterations", 5, "--component-sigma", "1,2", "--out", out) == 0
        table = rows(out / "comparison.csv")
        assert [(r["n"], r["mode"]) for r in table] == [("3", "tt"), ("3", "nat"), ("30", "tt"), ("30", "nat")]
        assert list(table[0]) == ["v", "n", "mode", "kld", "cc", "sim", "nss", "auc"]
        assert len(rows(out / "comparison_frames.csv")) == 4 * 50


class TestToyIocMetrics:
    def test_toy_defaults(self, tmp_path):
        out = tmp_path / "toy"
        assert run("toy", "--out", out) == 0
        table = rows(out / "toy.csv")
        assert [(r["truth"], r["n"]) for r in table] == [("unimodal", "3"), ("unimodal", "30"),
                                                         ("bimodal", "3"), ("bimodal", "30")]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["realizations"] == 1000

    def test_ioc(self, data, tmp_path):
        out = tmp_path / "ioc"
        assert run("ioc", "--input", data / "fixations.csv", "--grid", "12x10", "--realizations", 20,
                   "--out", out) == 0
        table = rows(out / "ioc.csv")
        assert [r["n"] for r in table] == ["1", "2", "3", "4", "5"]
        assert {r["realizations"] for r in table} == {"20"}

    def test_metrics(self, tmp_path, capsys):
        a, b = tmp_path / "a.sgrid", tmp_path / "b.sgrid"
        write_sgrid(a, [[0.5, 0.5]])
        write_sgrid(b, [[0.25, 0.75]])
        assert run("metrics", a, b, "--out", tmp_path / "m") == 0
        values = json.loads((tmp_path / "m" / "metrics.json").read_text())
        assert values["kld"] == pytest.approx(kld([0.25, 0.75], [0.5, 0.5]), abs=1e-12)
        assert values["sim"] == 0.75
        assert values["cc"] is None
        captured = capsys.readouterr()
        assert "kld" in captured.out and "cc undefined" in captured.err

    def test_metrics_with_fixations(self, tmp_path):
        a, b, fix = tmp_path / "a.sgrid", tmp_path / "b.sgrid", tmp_path / "fix.csv"
        write_sgrid(a, [[0.1, 0.2, 0.3, 0.4]])
        write_sgrid(b, [[0.25, 0.25, 0.25, 0.25]])
        fix.write_text("frame_id,observer_id,col,row\n5,0,3,0\n")
        assert run("metrics", a, b, "--fixations", fix, "--out", tmp_path / "m") == 0
        values = json.loads((tmp_path / "m" / "metrics.json").read_text())
        assert values["nss"] == pytest.approx(1.341641, abs=1e-6)
        assert values["auc"] == 1.0

    def test_metrics_shape_mismatch(self, tmp_path):
        a, b = tmp_path / "a.sgrid", tmp_path / "b.sgrid"
        write_sgrid(a, uniform((2, 2)))
        write_sgrid(b, uniform((3, 3)))
        assert run("metrics", a, b, "--out", tmp_path / "m") == 1


class TestManifestAndConfig:
    def test_manifest_lists_existing_outputs(self, data):
        manifest = json.loads((data / "manifest.json").read_text())
        assert manifest["command"] == "synth" and manifest["seed"] == 3
        assert manifest["version"].startswith("v")
        assert all(__import__("pathlib").Path(p).exists() for p in manifest["outputs"])

    def test_config_echo_reproduces_outputs(self, data, tmp_path):
        manifest = json.loads((data / "manifest.json").read_text())
        config = tmp_path / "config.json"
        config.write_text(json.dumps(manifest["config"]))
        assert run("synth", "--config", config, "--out", tmp_path / "again") == 0
        assert snapshot(tmp_path / "again") == snapshot(data)

    def test_flags_override_config(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"frames": 2, "grid": "8x8"}))
        assert run("synth", "--config", config, "--frames", 3, "--out", tmp_path / "o") == 0
        assert len(list((tmp_path / "o").glob("truth_*.sgrid"))) == 3

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"frams": 2}))
        assert run("synth", "--config", config, "--out", tmp_path / "o") == 2

    def test_threads_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NAT_BENCH_THREADS", "3")
        run("synth", "--frames", 1, "--grid", "4x4", "--out", tmp_path)
        assert json.loads((tmp_path / "manifest.json").read_text())["threads"] == 3


@pytest.mark.parametrize("command,extra", [
    ("stats", ["--realizations", 4]),
    ("ioc", ["--realizations", 5]),
    ("compare", ["--n", 3, "--iterations", 5, "--grid", "8x8", "--frames", 3, "--component-sigma", "1,2"]),
])
def test_thread_count_does_not_change_outputs(data, tmp_path, command, extra):
    inputs = [] if command == "compare" else ["--input", data / "fixations.csv", "--grid", "12x10"]
    for k in (1, 4):
        assert run(command, *inputs, *extra, "--threads", k, "--out", tmp_path / str(k)) == 0
    assert snapshot(tmp_path / "1") == snapshot(tmp_path / "4")
