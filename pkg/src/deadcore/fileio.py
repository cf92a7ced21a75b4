"""Flat-file formats: DCLAB1 field dumps and result tables.

Field dump layout: one text header line

    DCLAB1 <dim> <cells...> <h...> <origin...>

followed by the node values in row-major order, either as ASCII (one
shortest round-trip repr per line) or as little-endian 8-byte IEEE floats
(binary mode).  Both round-trip bit-exactly.

Tables are written as RFC-4180 CSV with leading '# key=value' provenance
comment lines, and mirrored as JSON records on request.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import GridSpec, ScalarField, make_grid

MAGIC = "DCLAB1"


def write_field(path, field_: ScalarField, binary: bool = False) -> None:
    grid = field_.grid
    header = " ".join(
        [MAGIC, str(grid.dim)]
        + [str(c) for c in grid.cells]
        + [repr(float(grid.h))] * grid.dim
        + [repr(float(o)) for o in grid.origin]
    )
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write((header + "\n").encode("ascii"))
            fh.write(field_.flat.astype("<f8").tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for v in field_.flat:
                fh.write(repr(float(v)) + "\n")


def read_field(path) -> ScalarField:
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.index(b"\n")
    header = raw[:nl].decode("ascii").split()
    if header[0] != MAGIC:
        raise ValueError(f"{path} is not a {MAGIC} field dump")
    dim = int(header[1])
    cells = tuple(int(c) for c in header[2:2 + dim])
    hs = [float(x) for x in header[2 + dim:2 + 2 * dim]]
    origin = tuple(float(x) for x in header[2 + 2 * dim:2 + 3 * dim])
    extent = tuple(h * c for h, c in zip(hs, cells))
    grid = make_grid(dim, origin, extent, cells)

    body = raw[nl + 1:]
    n = grid.node_count
    if len(body) == 8 * n:
        vals = np.frombuffer(body, dtype="<f8").copy()
    else:
        vals = np.array([float(line) for line in body.decode("ascii").split()])
        if vals.size != n:
            raise ValueError(f"expected {n} values, found {vals.size}")
    return ScalarField(grid, vals.reshape(grid.npts))


@dataclass
class ResultTable:
    """Rectangular results table with provenance metadata."""

    columns: tuple[str, ...]
    rows: list[tuple]
    provenance: dict

    def __post_init__(self):
        self.columns = tuple(self.columns)
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError("ragged row in result table")

    def append(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError("row length does not match columns")
        self.rows.append(tuple(values))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def _cell(self, v) -> str:
        if isinstance(v, float):
            return repr(v)
        return str(v)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.provenance):
            buf.write(f"# {k}={self.provenance[k]}\n")
        writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(self.columns)
        for r in self.rows:
            writer.writerow([self._cell(v) for v in r])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    def to_json(self) -> str:
        return json.dumps(
            {
                "provenance": self.provenance,
                "columns": list(self.columns),
                "rows": [list(r) for r in self.rows],
            },
            indent=1,
        )

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json())


def read_table_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse a table written by write_csv: (provenance, columns, raw rows)."""
    prov = {}
    lines = Path(path).read_text().splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            prov[k] = v
            body_start = i + 1
        else:
            break
    reader = csv.reader(lines[body_start:])
    rows = [row for row in reader if row]
    return prov, rows[0], rows[1:]
