"""Deterministic CSV emission and header-driven reproduction.

Every file starts with a comment block carrying the tool version, the
SHA-256 of the resolved config, the seed when one applies, free-form
metadata, and the full canonical config echoed on ``# cfg:`` lines.
Rows follow a single header line.  Formatting is fixed (repr floats,
LF newlines, no timestamps) so identical inputs give identical bytes,
and ``config_from_header`` rebuilds the exact experiment from the file
alone.
"""

from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ExperimentConfig, canonical_lines, config_sha256, parse_config
from .errors import ConfigError

_TOOL = "bcecap"


def format_cell(value) -> str:
    """Stable scalar formatting: repr for floats, bare ints, raw strings."""
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    text = str(value)
    if any(ch in text for ch in (",", "\n", "#")):
        raise ConfigError(f"cell value not CSV-safe: {text!r}")
    return text


def write_csv(path, column_names, rows, *, config=None, seed=None, meta=None):
    """Write one table; header block first, then names, then the rows.

    config: ExperimentConfig whose hash and canonical dump go in the
    header.  meta: ordered mapping of extra scalar metadata lines.
    """
    lines = [f"# {_TOOL} {__version__}"]
    if config is not None:
        lines.append(f"# config_sha256: {config_sha256(config)}")
    if seed is not None:
        lines.append(f"# seed: {int(seed)}")
    for key, value in (meta or {}).items():
        lines.append(f"# {key}: {format_cell(value)}")
    if config is not None:
        for cfg_line in canonical_lines(config):
            lines.append(f"# cfg: {cfg_line}")
    lines.append(",".join(column_names))
    n_cols = len(column_names)
    for row in rows:
        if len(row) != n_cols:
            raise ConfigError(
                f"row has {len(row)} cells, header has {n_cols}: {row!r}"
            )
        lines.append(",".join(format_cell(cell) for cell in row))
    data = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(data)


@dataclass(frozen=True)
class CsvTable:
    """Parsed CSV: header metadata, echoed config text, and raw columns."""

    version: str
    meta: dict
    cfg_text: str
    column_names: tuple
    columns: dict

    def floats(self, name: str) -> np.ndarray:
        return np.array([float(cell) for cell in self.columns[name]])


def read_csv(path) -> CsvTable:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()

    version = ""
    meta = {}
    cfg_lines = []
    body = []
    for line in lines:
        if line.startswith("# cfg: "):
            cfg_lines.append(line[len("# cfg: "):])
        elif line.startswith(f"# {_TOOL} "):
            version = line[len(f"# {_TOOL} "):]
        elif line.startswith("# "):
            key, sep, value = line[2:].partition(": ")
            if not sep:
                raise ConfigError(f"malformed header line: {line!r}")
            meta[key] = value
        elif line:
            body.append(line)
    if not body:
        raise ConfigError(f"{path}: no column header found")

    column_names = tuple(body[0].split(","))
    columns = {name: [] for name in column_names}
    for lineno, line in enumerate(body[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(column_names):
            raise ConfigError(f"{path}: row {lineno} has {len(cells)} cells")
        for name, cell in zip(column_names, cells):
            columns[name].append(cell)
    return CsvTable(
        version=version,
        meta=meta,
        cfg_text="\n".join(cfg_lines),
        column_names=column_names,
        columns=columns,
    )


def config_from_header(table: CsvTable) -> ExperimentConfig:
    """Rebuild the experiment a file came from and verify its hash."""
    if not table.cfg_text:
        raise ConfigError("file carries no config block")
    config = parse_config(table.cfg_text)
    recorded = table.meta.get("config_sha256")
    if recorded is not None and recorded != config_sha256(config):
        raise ConfigError("config hash in header does not match config block")
    return config
