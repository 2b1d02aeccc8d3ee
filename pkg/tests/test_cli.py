"""End-to-end command-line tests on small closed-form configurations.

Gaussian inputs short-circuit the spline tables, so whole solver runs cost
seconds; the discrete-input curve commands exercise the table path once.
"""

import argparse

import numpy as np
import pytest

from bcecap.cli import _preset_variants, main
from bcecap.config import config_sha256, db_to_linear
from bcecap.csvio import config_from_header, read_csv
from bcecap.errors import ConfigError

GAUSS_CFG = """\
input1 = gaussian
input2 = gaussian
fading.n_per_dim = 3
power.p_avg_dB = 0
sweep.lambda1 = 0.25, 0.5, 0.75
queue.n_frames = 10000
queue.seeds = 101, 102
boundary.n_samples = 8
"""


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def gauss_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "gauss.cfg"
    path.write_text(GAUSS_CFG)
    return path


@pytest.fixture(scope="module")
def solved(gauss_cfg, tmp_path_factory):
    """One run of each solver-backed subcommand into a shared directory."""
    out = tmp_path_factory.mktemp("solved")
    for argv in (
        ("policy", "--config", gauss_cfg, "--tag", "pol", "--out", out),
        ("boundary", "--config", gauss_cfg, "--tag", "bnd", "--out", out),
        ("region", "--config", gauss_cfg, "--tag", "reg", "--out", out),
        ("queue-validate", "--config", gauss_cfg, "--tag", "qv", "--out", out),
    ):
        assert run(*argv) == 0
    return out


class TestCurves:
    def test_bpsk_small_and_large_snr(self, tmp_path):
        assert run(
            "mi-curve", "--input", "bpsk", "--snr", "1e-9,0.25,1,4,16",
            "--int-ratio", "0", "--out", tmp_path,
        ) == 0
        table = read_csv(tmp_path / "mi_curve_bpsk.csv")
        assert table.column_names == (
            "snr", "mi_bits", "mmse", "mi_interf_bits", "mmse_interf"
        )
        mi = table.floats("mi_bits")
        mmse = table.floats("mmse")
        assert mi[0] == pytest.approx(0.0, abs=1e-6)
        assert mmse[0] == pytest.approx(1.0, abs=1e-5)
        assert np.all(np.diff(mi) > 0)
        assert np.all(np.diff(mmse) < 0)
        assert np.all(mi <= 1.0 + 1e-9)
        assert mi[-1] > 0.99
        # a silent interferer collapses both extra columns onto the
        # single-user curves
        assert table.floats("mi_interf_bits") == pytest.approx(mi, abs=1e-9)
        assert table.floats("mmse_interf") == pytest.approx(mmse, abs=1e-9)

    def test_gaussian_closed_forms(self, tmp_path):
        assert run(
            "mmse-curve", "--input", "gaussian", "--snr", "0.5,1,3",
            "--out", tmp_path,
        ) == 0
        table = read_csv(tmp_path / "mmse_curve_gaussian.csv")
        snr = table.floats("snr")
        assert table.floats("mi_bits") == pytest.approx(np.log2(1 + snr))
        assert table.floats("mmse") == pytest.approx(1 / (1 + snr))
        # the default interferer is the input itself at unit power ratio
        assert table.floats("mi_interf_bits") == pytest.approx(
            np.log2(1 + snr / (1 + snr))
        )
        assert table.meta["int_ratio"] == "1.0"

    def test_qam16_saturates_at_four_bits(self, tmp_path):
        assert run(
            "mi-curve", "--input", "qam16", "--snr", "0.5,2,8,32,128,512",
            "--int-ratio", "0", "--out", tmp_path,
        ) == 0
        mi = read_csv(tmp_path / "mi_curve_qam16.csv").floats("mi_bits")
        assert np.all(np.diff(mi) > 0)
        assert np.all(mi <= 4.0 + 1e-9)
        assert mi[-1] > 3.9

    @pytest.mark.parametrize(
        "argv",
        [
            ("mi-curve", "--input", "bpsk", "--snr", "3,2,1"),
            ("mi-curve", "--input", "bpsk", "--snr=-1,2"),
            ("mi-curve", "--input", "bpsk", "--snr", ""),
            ("mi-curve", "--input", "bpsk", "--snr", "a,b"),
            ("mi-curve", "--input", "octernary", "--snr", "1,2"),
            ("mi-curve", "--input", "bpsk", "--snr", "1,2", "--int-ratio", "-1"),
        ],
    )
    def test_bad_curve_arguments(self, argv, tmp_path):
        assert run(*argv, "--out", tmp_path) == 2


class TestDeterminism:
    def test_curve_reruns_byte_identical(self, tmp_path):
        for sub in ("a", "b"):
            assert run(
                "mi-curve", "--input", "bpsk", "--snr", "0.5,1,2",
                "--int-ratio", "0", "--out", tmp_path / sub,
            ) == 0
        first = (tmp_path / "a" / "mi_curve_bpsk.csv").read_bytes()
        second = (tmp_path / "b" / "mi_curve_bpsk.csv").read_bytes()
        assert first == second

    @pytest.mark.parametrize(
        "argv, name",
        [
            (("policy", "--tag", "pol"), "pol.csv"),
            (("region", "--tag", "reg"), "reg.csv"),
            (("queue-validate", "--tag", "qv"), "qv_seed101.csv"),
        ],
    )
    def test_solver_reruns_byte_identical(self, argv, name, gauss_cfg, tmp_path):
        for sub in ("a", "b"):
            assert run(
                *argv, "--config", gauss_cfg, "--out", tmp_path / sub
            ) == 0
        assert (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes()


class TestPolicyCommand:
    def test_schema_and_diagnostics(self, solved):
        table = read_csv(solved / "pol.csv")
        assert table.column_names == ("z1", "z2", "weight", "region", "P1", "P2")
        assert set(table.columns["region"]) <= {"12", "21"}
        assert table.floats("weight").sum() == pytest.approx(1.0)
        assert np.all(table.floats("P1") >= 0)
        assert np.all(table.floats("P2") >= 0)
        assert float(table.meta["epsilon"]) > 0
        assert 0 < float(table.meta["psi1"]) <= 1
        assert 0 < float(table.meta["psi2"]) <= 1
        assert float(table.meta["power_spent"]) <= 1.0 + 1e-3
        assert float(table.meta["max_kkt_residual"]) < 1e-2
        assert table.meta["rule"] == "strongest_last"

    def test_header_reproduces_experiment(self, solved):
        table = read_csv(solved / "pol.csv")
        config = config_from_header(table)
        assert config_sha256(config) == table.meta["config_sha256"]
        assert config.n_per_dim == 3
        assert config.input1.name == "gaussian"

    def test_set_overrides_beat_file(self, gauss_cfg, tmp_path):
        assert run(
            "policy", "--config", gauss_cfg, "--set", "fading.n_per_dim=2",
            "--tag", "pol2", "--out", tmp_path,
        ) == 0
        table = read_csv(tmp_path / "pol2.csv")
        assert config_from_header(table).n_per_dim == 2
        assert len(table.columns["z1"]) == 4


class TestBoundaryCommand:
    def test_strongest_last_is_identity(self, solved):
        table = read_csv(solved / "bnd.csv")
        assert table.column_names == ("z2", "z1_star", "residual_nats", "rule")
        z2 = table.floats("z2")
        assert len(z2) == 8
        assert z2[0] == 0.0
        assert np.all(np.diff(z2) > 0)
        assert table.floats("z1_star") == pytest.approx(z2)
        assert np.all(np.isnan(table.floats("residual_nats")))
        assert set(table.columns["rule"]) == {"strongest_last"}

    def test_gap_rule_residuals_vanish(self, gauss_cfg, tmp_path):
        assert run(
            "boundary", "--config", gauss_cfg, "--set", "decoding.rule=theorem2",
            "--tag", "t2", "--out", tmp_path,
        ) == 0
        table = read_csv(tmp_path / "t2.csv")
        assert table.meta["rule"] == "theorem2"
        star = table.floats("z1_star")
        res = table.floats("residual_nats")
        finite = np.isfinite(star) & (star > 0)
        assert np.any(finite)
        assert np.all(res[finite] < 1e-6)

    def test_gap_rule_needs_equal_exponents(self, gauss_cfg, tmp_path, capsys):
        assert run(
            "boundary", "--config", gauss_cfg, "--set", "decoding.rule=theorem2",
            "--set", "qos.theta2=0.02", "--tag", "t2u", "--out", tmp_path,
        ) == 0
        assert "strongest_last" in capsys.readouterr().err
        table = read_csv(tmp_path / "t2u.csv")
        assert set(table.columns["rule"]) == {"strongest_last"}
        assert table.meta["rule"] == "strongest_last"
        assert table.meta["rule_fallback"] == "true"


class TestRegionCommand:
    def test_frontier_schema_and_shape(self, solved):
        table = read_csv(solved / "reg.csv")
        assert table.column_names == (
            "lambda1", "a1_bits_s_hz", "a2_bits_s_hz", "epsilon", "iters", "status"
        )
        assert table.floats("lambda1") == pytest.approx([0.25, 0.5, 0.75])
        assert set(table.columns["status"]) == {"ok"}
        a1 = table.floats("a1_bits_s_hz")
        a2 = table.floats("a2_bits_s_hz")
        assert np.all(np.diff(a1) > 0)
        assert np.all(np.diff(a2) < 0)
        assert np.all(table.floats("epsilon") > 0)
        assert table.meta["points"] == "3"
        assert table.meta["failed_fraction"] == "0.0"

    @pytest.mark.filterwarnings("ignore:region point")
    def test_failed_sweep_exits_3(self, gauss_cfg, tmp_path, capsys):
        assert run(
            "region", "--config", gauss_cfg, "--set", "solver.eps_max_expand=0",
            "--tag", "fail", "--out", tmp_path,
        ) == 3
        assert "failed" in capsys.readouterr().err
        table = read_csv(tmp_path / "fail.csv")
        assert table.meta["failed_fraction"] == "1.0"
        assert all(s.startswith("failed") for s in table.columns["status"])

    def test_needs_some_configuration(self, tmp_path):
        assert run("region", "--out", tmp_path) == 2


class TestPresets:
    def variants(self, **kwargs):
        fields = {"config": None, "set": None, "theta": None, **kwargs}
        return _preset_variants(argparse.Namespace(**fields))

    def test_fig2_matrix(self):
        variants = self.variants(preset="fig2")
        tags = [tag for tag, _ in variants]
        assert len(tags) == 6
        assert "fig2_K-6.88dB_P+0dB" in tags
        assert "fig2_K+8.61dB_P-5dB" in tags
        by_tag = dict(variants)
        config = by_tag["fig2_K+4.97dB_P-5dB"]
        assert config.spec1.k_factor == pytest.approx(db_to_linear(4.97))
        assert config.p_avg == pytest.approx(db_to_linear(-5.0))
        assert config.input1.name == "bpsk"

    def test_fig3_matrix(self):
        variants = self.variants(preset="fig3")
        assert len(variants) == 9
        mods = {config.input1.name for _, config in variants}
        assert mods == {"bpsk", "qam16", "gaussian"}
        assert all(
            config.spec1.k_factor == pytest.approx(db_to_linear(-6.88))
            for _, config in variants
        )

    def test_fig4_theta_list(self):
        variants = self.variants(preset="fig4")
        assert [tag for tag, _ in variants] == [
            "fig4_theta0.001", "fig4_theta0.01", "fig4_theta0.1"
        ]
        assert all(
            config.qos.theta1 == config.qos.theta2 for _, config in variants
        )
        custom = self.variants(preset="fig4", theta="0.05")
        assert [tag for tag, _ in custom] == ["fig4_theta0.05"]
        assert custom[0][1].qos.theta1 == pytest.approx(0.05)

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            self.variants(preset="fig9")

    def test_fig4_end_to_end_with_overrides(self, tmp_path):
        assert run(
            "region", "--preset", "fig4", "--theta", "0.01",
            "--set", "input1=gaussian", "--set", "input2=gaussian",
            "--set", "fading.n_per_dim=3", "--set", "sweep.lambda1=0.5",
            "--out", tmp_path,
        ) == 0
        table = read_csv(tmp_path / "fig4_theta0.01.csv")
        config = config_from_header(table)
        assert config.input1.name == "gaussian"
        assert config.qos.theta1 == pytest.approx(0.01)
        assert config.p_avg == pytest.approx(db_to_linear(5.0))
        assert set(table.columns["status"]) == {"ok"}


class TestQueueValidateCommand:
    def test_one_file_per_seed(self, solved):
        hats = []
        for seed in (101, 102):
            table = read_csv(solved / f"qv_seed{seed}.csv")
            assert table.meta["seed"] == str(seed)
            assert table.column_names == (
                "user", "arrival_rate", "theta_target", "theta_hat",
                "ci_halfwidth", "stable",
            )
            assert table.columns["user"] == ["1", "2"]
            assert set(table.columns["stable"]) == {"true"}
            assert table.floats("theta_target") == pytest.approx([0.01, 0.01])
            for user in (1, 2):
                arrival = table.floats("arrival_rate")[user - 1]
                capacity = float(table.meta[f"effective_capacity_{user}"])
                assert arrival == pytest.approx(0.95 * capacity)
            assert np.all(table.floats("theta_hat") > 0)
            assert np.all(table.floats("ci_halfwidth") > 0)
            hats.append(tuple(table.floats("theta_hat")))
        assert hats[0] != hats[1]

    def test_overload_flags_unstable(self, gauss_cfg, tmp_path):
        assert run(
            "queue-validate", "--config", gauss_cfg,
            "--set", "queue.arrival_scale=1.5", "--set", "queue.seeds=7",
            "--tag", "hot", "--out", tmp_path,
        ) == 0
        table = read_csv(tmp_path / "hot_seed7.csv")
        assert set(table.columns["stable"]) == {"false"}
        assert np.all(np.isnan(table.floats("theta_hat")))
        # unstable users contribute no exceedance-curve rows
        tail = read_csv(tmp_path / "hot_tail_seed7.csv")
        assert tail.columns["user"] == []

    def test_tail_file_reproduces_theta_hat(self, solved):
        summary = read_csv(solved / "qv_seed101.csv")
        tail = read_csv(solved / "qv_tail_seed101.csv")
        assert tail.column_names == ("user", "q_bits", "ccdf")
        users = np.array([int(u) for u in tail.columns["user"]])
        q = tail.floats("q_bits")
        ccdf = tail.floats("ccdf")
        assert set(users) == {1, 2}
        assert np.all(ccdf > 0) and np.all(ccdf < 1)
        for user in (1, 2):
            sel = users == user
            assert np.all(np.diff(q[sel]) > 0)
            assert np.all(np.diff(ccdf[sel]) <= 0)
            slope = np.polyfit(q[sel], np.log(ccdf[sel]), 1)[0]
            reported = summary.floats("theta_hat")[user - 1]
            assert abs(slope) == pytest.approx(reported, rel=1e-12)
            assert float(tail.meta[f"theta_hat_{user}"]) == reported


class TestExitCodes:
    def test_usage_error_is_systemexit_2(self):
        with pytest.raises(SystemExit) as err:
            run()
        assert err.value.code == 2

    def test_missing_config_file(self, tmp_path):
        assert run("policy", "--config", tmp_path / "nope.cfg") == 4

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(GAUSS_CFG + "bogus.key = 1\n")
        assert run("policy", "--config", cfg, "--out", tmp_path) == 2

    def test_malformed_set_pair(self, gauss_cfg, tmp_path):
        assert run(
            "policy", "--config", gauss_cfg, "--set", "foo", "--out", tmp_path
        ) == 2

    def test_out_path_is_a_file(self, tmp_path):
        blocker = tmp_path / "taken"
        blocker.write_text("x")
        assert run(
            "mmse-curve", "--input", "gaussian", "--snr", "1", "--out", blocker
        ) == 4


class TestOutputDirectory:
    def test_env_default(self, gauss_cfg, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("BCECAP_OUT", str(tmp_path / "envdir"))
        assert run("mmse-curve", "--input", "gaussian", "--snr", "1,2") == 0
        out = capsys.readouterr().out.strip()
        assert (tmp_path / "envdir" / "mmse_curve_gaussian.csv").exists()
        assert out.endswith("mmse_curve_gaussian.csv")

    def test_out_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BCECAP_OUT", str(tmp_path / "envdir"))
        assert run(
            "mmse-curve", "--input", "gaussian", "--snr", "1,2",
            "--out", tmp_path / "flag",
        ) == 0
        assert (tmp_path / "flag" / "mmse_curve_gaussian.csv").exists()
        assert not (tmp_path / "envdir").exists()

    def test_config_dir_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BCECAP_OUT", str(tmp_path / "envdir"))
        cfg = tmp_path / "dir.cfg"
        cfg.write_text(GAUSS_CFG + f"output.dir = {tmp_path / 'cfgdir'}\n")
        assert run("policy", "--config", cfg, "--tag", "pol") == 0
        assert (tmp_path / "cfgdir" / "pol.csv").exists()
