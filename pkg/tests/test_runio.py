"""Tests for run artifacts: atomic writes, config parsing, manifests."""

import os

import numpy as np
import pytest

from gkdvlab.runio import (
    RunManifest,
    apply_overrides,
    atomic_write_bytes,
    atomic_write_text,
    fmt_value,
    parse_config_file,
    parse_config_text,
    sha256_bytes,
    sha256_file,
    write_csv,
)


class TestAtomicWrites:
    def test_text_lands_complete(self, tmp_path):
        path = tmp_path / "out.txt"
        atomic_write_text(path, "hello\nworld\n")
        assert path.read_text() == "hello\nworld\n"

    def test_no_temp_litter_on_success(self, tmp_path):
        path = tmp_path / "out.bin"
        atomic_write_bytes(path, b"\x00\x01")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["out.bin"]

    def test_overwrite_replaces_whole_file(self, tmp_path):
        path = tmp_path / "out.txt"
        atomic_write_text(path, "long old content that is longer")
        atomic_write_text(path, "new")
        assert path.read_text() == "new"

    def test_failure_leaves_no_partial_file(self, tmp_path):
        target = tmp_path / "busy"
        target.mkdir()
        with pytest.raises(OSError):
            atomic_write_bytes(target, b"data")
        assert list(target.iterdir()) == []
        assert [p.name for p in tmp_path.iterdir()] == ["busy"]


class TestFormatting:
    def test_floats_round_trip_exactly(self):
        for v in (1 / 3, 1e-300, 2.5432347019348721, np.float64(0.1)):
            assert float(fmt_value(v)) == float(v)

    def test_integers_and_strings_pass_through(self):
        assert fmt_value(42) == "42"
        assert fmt_value("label") == "label"


class TestConfigParsing:
    def test_basic_parse(self):
        text = """
        # comment
        m = 2
        lam=0.3

        potential.gamma = 1.5  # trailing note
        name = refraction
        """
        cfg = parse_config_text(text)
        assert cfg == {
            "m": "2",
            "lam": "0.3",
            "potential.gamma": "1.5",
            "name": "refraction",
        }

    def test_later_keys_win(self):
        cfg = parse_config_text("a=1\na=2\n")
        assert cfg["a"] == "2"

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError):
            parse_config_text("this is not a key value pair\n")

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("eps=0.1\nm=3\n")
        assert parse_config_file(path) == {"eps": "0.1", "m": "3"}

    def test_overrides_apply_in_order(self):
        cfg = {"a": "1", "b": "2"}
        out = apply_overrides(cfg, ["b=20", "c=30"])
        assert out == {"a": "1", "b": "20", "c": "30"}
        with pytest.raises(ValueError):
            apply_overrides(cfg, ["notanassignment"])


class TestCsv:
    def test_header_comments_and_precision(self, tmp_path):
        path = tmp_path / "table.csv"
        write_csv(path, "t,value", [(0.1, 1 / 3), (0.2, 2 / 3)], comments=("run=x",))
        lines = path.read_text().splitlines()
        assert lines[0] == "# run=x"
        assert lines[1] == "t,value"
        data = np.loadtxt(lines[2:], delimiter=",")
        assert data[0, 1] == 1 / 3  # %.17g preserves the double exactly
        assert data[1, 0] == 0.2


class TestManifest:
    def test_deterministic_text_and_hash(self, tmp_path):
        m1 = RunManifest()
        m1.set("grid.N", 4096)
        m1.set("dt", 1e-3)
        m2 = RunManifest()
        m2.set("dt", 1e-3)
        m2.set("grid.N", 4096)  # insertion order must not matter
        assert m1.text() == m2.text()
        assert m1.sha() == m2.sha()

        path = tmp_path / "manifest.txt"
        m1.write(path)
        again = RunManifest.read(path)
        assert again.get("grid.N") == "4096"
        assert float(again.get("dt")) == 1e-3

    def test_hashes_agree_between_bytes_and_file(self, tmp_path):
        blob = b"snapshot-bytes"
        path = tmp_path / "blob.bin"
        path.write_bytes(blob)
        assert sha256_bytes(blob) == sha256_file(path)
