"""CSV loading and layout matching for the figure kinds.

Every kind declares which table layouts it accepts; all inputs are read and
validated before any drawing starts, so a malformed file fails fast with the
offending column named. The renderer itself never computes new science
numbers, it only re-plots what the tables contain.
"""

import csv
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np


class SchemaError(Exception):
    """An input table is missing, unreadable, or has the wrong layout."""


class TableSchema(NamedTuple):
    """One accepted column layout.

    ``extra`` controls what may follow the fixed columns: "none" for an
    exact header, "value" for exactly one extra data column with a free
    name, "lines" for one or more extra columns plotted as separate
    curves, and "xy" for any two-column table read as (x, y).
    """

    name: str
    fixed: tuple
    extra: str


class Table(NamedTuple):
    path: Path
    schema: str
    header: tuple
    columns: dict


POINCARE = TableSchema("poincare section", ("seed_index", "period", "phi", "z"), "none")
PHASE_GRID = TableSchema("phase-map grid", ("theta", "phi"), "value")
MATRIX = TableSchema("operator matrix", ("row", "col", "re", "im", "abs"), "none")
SERIES_XY = TableSchema("two-column scaling series", (), "xy")
READOUT = TableSchema(
    "readout uncertainty table", ("n_atoms", "bz_opt", "delta_bz", "delta_bz_sq"), "none")
FIT = TableSchema(
    "fit summary", ("slope", "intercept", "r_squared", "x_lo", "x_hi", "n_points"), "none")
TIME_SERIES = TableSchema("stroboscopic record", ("period", "time"), "lines")
SWEEP = TableSchema("parameter sweep", (), "lines")
HUSIMI = TableSchema("husimi grid", ("theta", "phi", "q"), "none")
CUTS = TableSchema("entropy line cuts", ("n_atoms", "theta", "entropy"), "none")

# input slots per kind: required slots, then optional trailing slots; each
# slot lists its accepted layouts in match order
KIND_SLOTS = {
    "poincare-scatter": ([(POINCARE,)], []),
    "phase-heatmap": ([(PHASE_GRID, MATRIX)], []),
    "loglog-scaling": ([(SERIES_XY, READOUT)], [(FIT,)]),
    "sweep-lines": ([(TIME_SERIES, SWEEP)], []),
    "bloch-husimi": ([(HUSIMI,)], []),
    "entropy-cut": ([(CUTS,)], []),
}


def read_table(path) -> tuple:
    """Read one CSV into (header, columns of float arrays)."""
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise SchemaError(f"{path.name}: empty file")
    header, body = rows[0], rows[1:]
    seen = set()
    for name in header:
        if name in seen:
            raise SchemaError(f"{path.name}: duplicate column '{name}'")
        seen.add(name)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise SchemaError(
                f"{path.name}: row {i + 2} has {len(row)} cells, expected {len(header)}")
    columns = {}
    for j, name in enumerate(header):
        try:
            columns[name] = np.array([float(row[j]) for row in body])
        except ValueError:
            bad = next(row[j] for row in body if not _parses(row[j]))
            raise SchemaError(
                f"{path.name}: column '{name}' has non-numeric value {bad!r}") from None
    return header, columns


def _parses(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _mismatch(schema: TableSchema, header) -> str:
    missing = [c for c in schema.fixed if c not in header]
    if missing:
        return f"missing column '{missing[0]}' (wanted {schema.name})"
    extras = [c for c in header if c not in schema.fixed]
    if schema.extra == "none" and extras:
        return f"unexpected column '{extras[0]}' (wanted {schema.name})"
    if schema.extra == "value" and len(extras) != 1:
        if not extras:
            return f"missing a value column after {schema.fixed} (wanted {schema.name})"
        return f"unexpected column '{extras[1]}' (wanted {schema.name})"
    if schema.extra in ("lines", "xy") and len(header) < 2:
        return f"missing a data column after '{header[0]}' (wanted {schema.name})"
    if schema.extra == "xy" and len(header) > 2:
        return f"unexpected column '{header[2]}' (wanted {schema.name})"
    return ""


def match_schema(path, header, candidates: Sequence[TableSchema]) -> TableSchema:
    """Return the first candidate layout the header satisfies."""
    faults = []
    for schema in candidates:
        fault = _mismatch(schema, header)
        if not fault:
            return schema
        missing = sum(c not in header for c in schema.fixed)
        faults.append((missing, len(faults), fault))
    # report against the closest layout so the named column is the useful one
    faults.sort()
    raise SchemaError(f"{Path(path).name}: {faults[0][2]}")


def load_inputs(kind: str, paths: Sequence) -> list:
    """Validate and load every input for ``kind`` before any rendering."""
    if kind not in KIND_SLOTS:
        raise SchemaError(f"unknown kind {kind!r}")
    required, optional = KIND_SLOTS[kind]
    lo, hi = len(required), len(required) + len(optional)
    if not lo <= len(paths) <= hi:
        want = str(lo) if lo == hi else f"{lo} to {hi}"
        raise SchemaError(f"{kind} takes {want} input file(s), got {len(paths)}")
    slots = required + optional[: len(paths) - lo]
    tables = []
    for path, candidates in zip(paths, slots):
        header, columns = read_table(path)
        schema = match_schema(path, header, candidates)
        tables.append(Table(Path(path), schema.name, tuple(header), columns))
    return tables
