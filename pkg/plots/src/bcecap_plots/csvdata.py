"""Strict reader for the solver CLI's CSV interface.

Files carry ``# key: value`` metadata lines, then one column-name row,
then data rows. Every malformed construct is reported with the file path
and 1-based line number, so batch figure builds fail loudly and point at
the exact offending input.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MalformedCsvError(Exception):
    """Input file unusable; the message names the path and line."""

    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = Path(path)
        self.line_no = line_no
        self.reason = reason


@dataclass(frozen=True)
class Table:
    """One parsed CSV: metadata, column names, and string cells."""

    path: Path
    meta: dict
    cfg: dict
    column_names: tuple
    rows: tuple
    header_line: int

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        if name not in self.column_names:
            raise MalformedCsvError(
                self.path, self.header_line, f"missing column {name!r}"
            )
        idx = self.column_names.index(name)
        return [row[idx] for row in self.rows]

    def floats(self, name: str) -> np.ndarray:
        idx_offset = self.header_line + 1
        values = []
        for i, cell in enumerate(self.column(name)):
            try:
                values.append(float(cell))
            except ValueError:
                raise MalformedCsvError(
                    self.path, idx_offset + i,
                    f"column {name!r}: not a number: {cell!r}",
                ) from None
        return np.array(values, dtype=float)


def _parse_comment(line: str, meta: dict, cfg: dict) -> None:
    body = line[1:].strip()
    if body.startswith("cfg:"):
        key, sep, value = body[4:].partition("=")
        if sep:
            cfg[key.strip()] = value.strip()
        return
    key, sep, value = body.partition(":")
    if sep:
        meta[key.strip()] = value.strip()
    # colon-free comments are banners; nothing to record


def read_table(path) -> Table:
    """Parse one CSV file, raising MalformedCsvError on any defect."""
    path = Path(path)
    if not path.is_file():
        raise MalformedCsvError(path, 0, "no such file")
    meta: dict = {}
    cfg: dict = {}
    column_names: tuple = ()
    header_line = 0
    rows = []
    for line_no, line in enumerate(
        path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            raise MalformedCsvError(path, line_no, "blank line")
        if line.startswith("#"):
            if column_names:
                raise MalformedCsvError(
                    path, line_no, "metadata after the column header"
                )
            _parse_comment(line, meta, cfg)
            continue
        cells = tuple(cell.strip() for cell in line.split(","))
        if not column_names:
            if any(not cell for cell in cells):
                raise MalformedCsvError(path, line_no, "empty column name")
            if len(set(cells)) != len(cells):
                raise MalformedCsvError(path, line_no, "duplicate column name")
            column_names = cells
            header_line = line_no
            continue
        if len(cells) != len(column_names):
            raise MalformedCsvError(
                path, line_no,
                f"row has {len(cells)} fields, expected {len(column_names)}",
            )
        rows.append(cells)
    if not column_names:
        raise MalformedCsvError(path, 1, "no column header")
    return Table(
        path=path,
        meta=meta,
        cfg=cfg,
        column_names=column_names,
        rows=tuple(rows),
        header_line=header_line,
    )


# derived outputs that would pollute a legend built from metadata;
# matched against the last dotted component so namespaced config echoes
# (e.g. boundary.z_max) are excluded along with their flat counterparts
_NON_IDENTITY_META = frozenset({
    "config_sha256", "points", "failed_fraction", "z_max",
    "effective_capacity_1", "effective_capacity_2",
    "theta_hat_1", "theta_hat_2",
})


def _identity(table: Table) -> dict:
    merged = dict(table.meta)
    merged.update(table.cfg)
    return {
        k: v for k, v in merged.items()
        if k.rpartition(".")[2] not in _NON_IDENTITY_META
    }


def series_labels(tables) -> tuple:
    """One label per table from the metadata keys that distinguish them.

    Falls back to file stems when the headers cannot tell the series
    apart (or there is only one).
    """
    tables = list(tables)
    if len(tables) == 1:
        return (tables[0].path.stem,)
    idents = [_identity(t) for t in tables]
    shared = set.intersection(*(set(d) for d in idents)) if idents else set()
    varying = sorted(
        k for k in shared if len({d[k] for d in idents}) > 1
    )
    if not varying:
        return tuple(t.path.stem for t in tables)
    labels = tuple(
        ", ".join(f"{k}={_compact(d[k])}" for k in varying) for d in idents
    )
    if len(set(labels)) != len(labels):
        return tuple(t.path.stem for t in tables)
    return labels


def _compact(value: str) -> str:
    try:
        return f"{float(value):.4g}"
    except ValueError:
        return value
