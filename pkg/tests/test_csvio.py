"""CSV writer/reader tests: byte determinism and header reproduction."""

import numpy as np
import pytest

from bcecap.config import canonical_lines, config_sha256, parse_config
from bcecap.csvio import config_from_header, format_cell, read_csv, write_csv
from bcecap.errors import ConfigError

CFG = parse_config("input1 = bpsk\ninput2 = qam16\npower.p_avg_dB = 5\n")


def write_sample(path, config=CFG):
    write_csv(
        path,
        ("lambda1", "a1_bits_s_hz", "a2_bits_s_hz", "status"),
        [
            (0.0, 0.0, 0.7311, "ok"),
            (0.5, float("nan"), float("nan"), "failed"),
            (1.0, float("inf"), 0.0, "ok"),
        ],
        config=config,
        seed=42,
        meta={"epsilon": 1.25, "stable": True},
    )


class TestFormat:
    def test_cell_formats(self):
        assert format_cell(1.5) == "1.5"
        assert format_cell(np.float64(1e-6)) == "1e-06"
        assert format_cell(7) == "7"
        assert format_cell(np.int64(7)) == "7"
        assert format_cell(True) == "true"
        assert format_cell(np.bool_(False)) == "false"
        assert format_cell("ok") == "ok"

    def test_unsafe_cell_rejected(self):
        with pytest.raises(ConfigError, match="CSV-safe"):
            format_cell("a,b")


class TestRoundTrip:
    def test_read_back(self, tmp_path):
        path = tmp_path / "region.csv"
        write_sample(path)
        table = read_csv(path)
        assert table.version == "0.1.0"
        assert table.meta["seed"] == "42"
        assert table.meta["epsilon"] == "1.25"
        assert table.meta["stable"] == "true"
        assert table.column_names == ("lambda1", "a1_bits_s_hz", "a2_bits_s_hz", "status")
        lam = table.floats("lambda1")
        a1 = table.floats("a1_bits_s_hz")
        assert lam.tolist() == [0.0, 0.5, 1.0]
        assert np.isnan(a1[1]) and np.isinf(a1[2])
        assert table.columns["status"] == ["ok", "failed", "ok"]

    def test_byte_identical_rewrite(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_sample(p1)
        write_sample(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_no_timestamps_in_header(self, tmp_path):
        path = tmp_path / "a.csv"
        write_sample(path)
        text = path.read_text()
        assert "202" not in text.split("\n")[0]

    def test_config_reproduced_from_header(self, tmp_path):
        path = tmp_path / "a.csv"
        write_sample(path)
        table = read_csv(path)
        rebuilt = config_from_header(table)
        assert canonical_lines(rebuilt) == canonical_lines(CFG)
        assert table.meta["config_sha256"] == config_sha256(rebuilt)

    def test_tampered_hash_detected(self, tmp_path):
        path = tmp_path / "a.csv"
        write_sample(path)
        text = path.read_text().replace(config_sha256(CFG), "0" * 64)
        path.write_text(text)
        with pytest.raises(ConfigError, match="hash"):
            config_from_header(read_csv(path))

    def test_missing_config_block(self, tmp_path):
        path = tmp_path / "bare.csv"
        write_csv(path, ("x",), [(1.0,)])
        with pytest.raises(ConfigError, match="no config block"):
            config_from_header(read_csv(path))


class TestMalformed:
    def test_row_width_mismatch_on_write(self, tmp_path):
        with pytest.raises(ConfigError, match="cells"):
            write_csv(tmp_path / "x.csv", ("a", "b"), [(1.0,)])

    def test_row_width_mismatch_on_read(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1.0\n")
        with pytest.raises(ConfigError, match="row 2"):
            read_csv(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("")
        with pytest.raises(ConfigError, match="no column header"):
            read_csv(path)

    def test_malformed_meta_line(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("# bad header line\na\n1\n")
        with pytest.raises(ConfigError, match="malformed"):
            read_csv(path)
