"""Figure construction over parsed CSV tables.

Every figure re-draws what the CSVs already contain; nothing is
recomputed from channel or solver models. One input file contributes
exactly one data series to its figure.
"""

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from .csvdata import MalformedCsvError, read_table, series_labels

RATE_XLABEL = "user 1 arrival rate $a_1$ [bits/sec/Hz]"
RATE_YLABEL = "user 2 arrival rate $a_2$ [bits/sec/Hz]"

CURVE_YLABELS = {
    "mi_bits": "mutual information [bits/channel use]",
    "mi_interf_bits": "mutual information under interference [bits/channel use]",
    "mmse": "MMSE",
    "mmse_interf": "MMSE under interference",
}


@dataclass(frozen=True)
class FigureSpec:
    """Inputs and layout of one figure built from CSV series."""

    csv_paths: tuple
    out_path: Path
    labels: tuple = ()
    xlabel: str = ""
    ylabel: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.csv_paths:
            raise MalformedCsvError(self.out_path, 0, "no input CSV files")
        if self.labels and len(self.labels) != len(self.csv_paths):
            raise MalformedCsvError(
                self.out_path, 0,
                f"{len(self.labels)} labels for {len(self.csv_paths)} files",
            )
        for path in self.csv_paths:
            if not Path(path).is_file():
                raise MalformedCsvError(path, 0, "no such file")

    def tables(self) -> list:
        return [read_table(path) for path in self.csv_paths]

    def series(self) -> list:
        tables = self.tables()
        labels = self.labels or series_labels(tables)
        return list(zip(tables, labels))


def _new_axes():
    fig, ax = plt.subplots(figsize=(6.4, 4.8), layout="constrained")
    ax.grid(True, alpha=0.3)
    return fig, ax


def _finish(fig, ax, spec: FigureSpec, xlabel: str, ylabel: str):
    ax.set_xlabel(spec.xlabel or xlabel)
    ax.set_ylabel(spec.ylabel or ylabel)
    ax.legend()


def save(fig, out_path) -> Path:
    """Write the figure to its (vector) output path and release it."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def region_figure(spec: FigureSpec):
    """Frontier overlay: one polyline per CSV in the (a1, a2) plane."""
    fig, ax = _new_axes()
    for table, label in spec.series():
        a1 = table.floats("a1_bits_s_hz")
        a2 = table.floats("a2_bits_s_hz")
        if "status" in table.column_names:
            ok = np.array([s == "ok" for s in table.column("status")])
            a1, a2 = a1[ok], a2[ok]
        if a1.size == 0:
            raise MalformedCsvError(
                table.path, table.header_line, "no plottable frontier points"
            )
        style = {"marker": "o", "linestyle": "none"} if a1.size == 1 else {}
        ax.plot(a1, a2, label=label, **style)
    _finish(fig, ax, spec, RATE_XLABEL, RATE_YLABEL)
    return fig


def curves_figure(spec: FigureSpec):
    """One information or MMSE curve against SNR per CSV."""
    column = spec.extras.get("column", "mi_bits")
    fig, ax = _new_axes()
    for table, label in spec.series():
        ax.plot(table.floats("snr"), table.floats(column), label=label)
    _finish(fig, ax, spec, "SNR (linear)", CURVE_YLABELS.get(column, column))
    return fig


def boundary_figure(spec: FigureSpec):
    """Decode-order threshold z1*(z2) per CSV; off-scale sentinel rows
    (inf: one order everywhere; 0: the other) do not produce points."""
    fig, ax = _new_axes()
    for table, label in spec.series():
        z2 = table.floats("z2")
        z1 = table.floats("z1_star")
        finite = np.isfinite(z1) & (z1 > 0)
        ax.plot(z2[finite], z1[finite], label=label)
    _finish(fig, ax, spec, "channel gain $z_2$", "decode-order threshold $z_1^\\star$")
    return fig


def tail_figure(spec: FigureSpec):
    """Queue tail: ln Pr(Q >= q) scatter per user with the fitted decay
    line; the annotated slope magnitude is the tail exponent estimate.

    Returns (figure, {(path, user): slope magnitude}).
    """
    fig, ax = _new_axes()
    slopes = {}
    for table, label in spec.series():
        users = table.column("user")
        q = table.floats("q_bits")
        ccdf = table.floats("ccdf")
        if not users:
            raise MalformedCsvError(
                table.path, table.header_line, "no tail rows (empty or unstable trace)"
            )
        if np.any(ccdf <= 0):
            raise MalformedCsvError(
                table.path, table.header_line, "ccdf values must be positive"
            )
        for user in dict.fromkeys(users):
            sel = np.array([u == user for u in users])
            if sel.sum() < 2:
                raise MalformedCsvError(
                    table.path, table.header_line,
                    f"user {user}: need at least 2 tail points for a slope",
                )
            log_ccdf = np.log(ccdf[sel])
            slope, intercept = np.polyfit(q[sel], log_ccdf, 1)
            slopes[(table.path, user)] = abs(float(slope))
            series_label = f"{label} user {user}" if len(spec.csv_paths) > 1 \
                else f"user {user}"
            pts = ax.plot(q[sel], log_ccdf, marker="o", linestyle="none",
                          label=series_label)
            ax.plot(q[sel], slope * q[sel] + intercept, "--",
                    color=pts[0].get_color(),
                    label=f"fit: $\\hat\\theta$ = {abs(slope):.4g}")
    _finish(fig, ax, spec, "queue threshold $q$ [bits]", "ln Pr($Q \\geq q$)")
    return fig, slopes


def render_region(spec: FigureSpec) -> Path:
    return save(region_figure(spec), spec.out_path)


def render_curves(spec: FigureSpec) -> Path:
    return save(curves_figure(spec), spec.out_path)


def render_boundary(spec: FigureSpec) -> Path:
    return save(boundary_figure(spec), spec.out_path)


def render_tail(spec: FigureSpec) -> Path:
    fig, _ = tail_figure(spec)
    return save(fig, spec.out_path)
