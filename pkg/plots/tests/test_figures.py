import numpy as np
import pytest

from bcecap_plots.csvdata import MalformedCsvError
from bcecap_plots.figures import (
    FigureSpec,
    boundary_figure,
    curves_figure,
    region_figure,
    render_region,
    tail_figure,
)

from conftest import (
    write_boundary_csv,
    write_curve_csv,
    write_region_csv,
    write_tail_csv,
)

FRONTIER = [(0.25, 0.1, 0.5, "ok"), (0.5, 0.3, 0.3, "ok"), (0.75, 0.5, 0.1, "ok")]


def spec_for(tmp_path, paths, **kwargs):
    return FigureSpec(
        csv_paths=tuple(paths), out_path=tmp_path / "fig.pdf", **kwargs
    )


class TestFigureSpec:
    def test_requires_at_least_one_csv(self, tmp_path):
        with pytest.raises(MalformedCsvError, match="no input CSV"):
            spec_for(tmp_path, [])

    def test_label_count_must_match(self, tmp_path):
        path = write_region_csv(tmp_path / "r.csv", FRONTIER)
        with pytest.raises(MalformedCsvError, match="2 labels for 1 files"):
            spec_for(tmp_path, [path], labels=("a", "b"))

    def test_all_files_must_exist(self, tmp_path):
        path = write_region_csv(tmp_path / "r.csv", FRONTIER)
        with pytest.raises(MalformedCsvError, match=r"gone\.csv:0: no such file"):
            spec_for(tmp_path, [path, tmp_path / "gone.csv"])


class TestRegionFigure:
    def test_one_series_per_csv(self, tmp_path):
        paths = [
            write_region_csv(
                tmp_path / f"k{i}.csv",
                [(lam, a1 * (i + 1), a2 * (i + 1), s) for lam, a1, a2, s in FRONTIER],
                cfg=[("fading.K1", str(i))],
            )
            for i in range(3)
        ]
        fig = region_figure(spec_for(tmp_path, paths))
        ax = fig.axes[0]
        assert len(ax.get_lines()) == 3
        assert [line.get_label() for line in ax.get_lines()] == [
            "fading.K1=0", "fading.K1=1", "fading.K1=2",
        ]
        assert "bits/sec/Hz" in ax.get_xlabel()
        assert "bits/sec/Hz" in ax.get_ylabel()
        assert ax.get_legend() is not None

    def test_frontier_polyline_matches_rows(self, tmp_path):
        path = write_region_csv(tmp_path / "r.csv", FRONTIER)
        fig = region_figure(spec_for(tmp_path, [path]))
        line = fig.axes[0].get_lines()[0]
        assert line.get_xdata() == pytest.approx([0.1, 0.3, 0.5])
        assert line.get_ydata() == pytest.approx([0.5, 0.3, 0.1])

    def test_failed_rows_are_dropped(self, tmp_path):
        rows = FRONTIER + [(0.9, 7.0, 7.0, "failed: eps bracket exhausted")]
        path = write_region_csv(tmp_path / "r.csv", rows)
        fig = region_figure(spec_for(tmp_path, [path]))
        line = fig.axes[0].get_lines()[0]
        assert line.get_xdata() == pytest.approx([0.1, 0.3, 0.5])

    def test_single_point_rendered_as_marker(self, tmp_path):
        path = write_region_csv(tmp_path / "r.csv", [(0.5, 0.3, 0.3, "ok")])
        fig = region_figure(spec_for(tmp_path, [path]))
        line = fig.axes[0].get_lines()[0]
        assert line.get_linestyle().lower() in ("none", "")
        assert line.get_marker() == "o"

    def test_all_failed_rows_is_an_error(self, tmp_path):
        path = write_region_csv(tmp_path / "r.csv", [(0.5, 1.0, 1.0, "failed: x")])
        with pytest.raises(MalformedCsvError, match="no plottable frontier points"):
            region_figure(spec_for(tmp_path, [path]))

    def test_mismatched_columns_are_an_error(self, tmp_path):
        good = write_region_csv(tmp_path / "good.csv", FRONTIER)
        bad = tmp_path / "bad.csv"
        bad.write_text("lambda1,rate\n0.5,0.3\n")
        with pytest.raises(MalformedCsvError, match="missing column 'a1_bits_s_hz'"):
            region_figure(spec_for(tmp_path, [good, bad]))

    def test_explicit_labels_override_metadata(self, tmp_path):
        path = write_region_csv(tmp_path / "r.csv", FRONTIER)
        fig = region_figure(spec_for(tmp_path, [path], labels=("mine",)))
        assert fig.axes[0].get_lines()[0].get_label() == "mine"

    def test_render_writes_vector_file(self, tmp_path):
        path = write_region_csv(tmp_path / "r.csv", FRONTIER)
        out = render_region(spec_for(tmp_path, [path]))
        assert out.is_file()
        assert out.read_bytes()[:5] == b"%PDF-"


class TestCurvesFigure:
    def test_default_column_and_labels(self, tmp_path):
        snr = np.array([0.5, 1.0, 2.0])
        paths = [
            write_curve_csv(tmp_path / f"{n}.csv", snr, np.log2(1 + snr) * f, name=n)
            for n, f in (("bpsk", 0.5), ("qam16", 1.0))
        ]
        fig = curves_figure(spec_for(tmp_path, paths))
        ax = fig.axes[0]
        assert len(ax.get_lines()) == 2
        assert "bits/channel use" in ax.get_ylabel()
        assert ax.get_xlabel() == "SNR (linear)"
        assert [l.get_label() for l in ax.get_lines()] == [
            "input=bpsk, interferer=bpsk", "input=qam16, interferer=qam16",
        ]

    def test_column_selection(self, tmp_path):
        snr = np.array([0.5, 1.0])
        path = write_curve_csv(tmp_path / "c.csv", snr, np.log2(1 + snr))
        spec = spec_for(tmp_path, [path], extras={"column": "mmse"})
        fig = curves_figure(spec)
        line = fig.axes[0].get_lines()[0]
        assert line.get_ydata() == pytest.approx(1 / (1 + snr))
        assert fig.axes[0].get_ylabel() == "MMSE"


class TestBoundaryFigure:
    def test_sentinel_rows_do_not_plot(self, tmp_path):
        z2 = np.array([0.5, 1.0, 2.0, 3.0, 4.0])
        z1 = np.array([np.inf, np.inf, 2.2, 2.9, 3.5])
        path = write_boundary_csv(tmp_path / "b.csv", z2, z1)
        fig = boundary_figure(spec_for(tmp_path, [path]))
        line = fig.axes[0].get_lines()[0]
        assert line.get_xdata() == pytest.approx([2.0, 3.0, 4.0])
        assert line.get_ydata() == pytest.approx([2.2, 2.9, 3.5])

    def test_axis_labels_name_the_threshold(self, tmp_path):
        path = write_boundary_csv(tmp_path / "b.csv", [1.0], [1.5])
        fig = boundary_figure(spec_for(tmp_path, [path]))
        assert "z_2" in fig.axes[0].get_xlabel()
        assert "z_1" in fig.axes[0].get_ylabel()


class TestTailFigure:
    def test_fitted_slope_matches_header_estimate(self, tmp_path):
        thetas = {1: 0.02, 2: 0.05}
        path = write_tail_csv(tmp_path / "t.csv", thetas)
        fig, slopes = tail_figure(spec_for(tmp_path, [path]))
        for user, theta in thetas.items():
            assert slopes[(path, str(user))] == pytest.approx(theta, rel=1e-9)
        # exact geometric tail: scatter plus fit per user
        assert len(fig.axes[0].get_lines()) == 4
        labels = [l.get_label() for l in fig.axes[0].get_lines()]
        assert labels[0] == "user 1"
        assert labels[1].startswith("fit:") and "0.02" in labels[1]

    def test_axis_labels(self, tmp_path):
        path = write_tail_csv(tmp_path / "t.csv", {1: 0.02})
        fig, _ = tail_figure(spec_for(tmp_path, [path]))
        assert "bits" in fig.axes[0].get_xlabel()
        assert "Pr" in fig.axes[0].get_ylabel()

    def test_empty_trace_is_an_error(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("# theta_hat_1: nan\nuser,q_bits,ccdf\n")
        with pytest.raises(MalformedCsvError, match="no tail rows"):
            tail_figure(spec_for(tmp_path, [path]))

    def test_nonpositive_ccdf_is_an_error(self, tmp_path):
        path = tmp_path / "zero.csv"
        path.write_text("user,q_bits,ccdf\n1,10.0,0.5\n1,20.0,0.0\n")
        with pytest.raises(MalformedCsvError, match="ccdf values must be positive"):
            tail_figure(spec_for(tmp_path, [path]))

    def test_single_point_cannot_anchor_a_slope(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("user,q_bits,ccdf\n1,10.0,0.5\n")
        with pytest.raises(MalformedCsvError, match="at least 2 tail points"):
            tail_figure(spec_for(tmp_path, [path]))
