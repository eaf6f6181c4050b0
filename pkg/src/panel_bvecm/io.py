"""Long-format CSV ingestion and export.

Schema: header ``individual,date,variable,value`` with ISO-8601 dates.
Individuals and variables keep their order of first appearance (variable
order fixes the Cholesky ordering used by FEVD and IRF); dates are sorted.
"""

from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DuplicateKey, MissingCell, ParseError, RaggedPanel
from .model import PanelData, deterministic_terms

HEADER = ("individual", "date", "variable", "value")


def _parse_date(text: str, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        try:
            return dt.datetime.fromisoformat(text.strip()).date()
        except ValueError:
            raise ParseError(line, f"date {text!r} is not ISO-8601") from None


def ingest_csv(path, deterministic: str = "constant") -> PanelData:
    """Read a complete long-format panel into :class:`PanelData`.

    Raises :class:`ParseError` (with the 1-based line number) on malformed
    rows, :class:`DuplicateKey` on a repeated ``(individual, date, variable)``,
    :class:`RaggedPanel` when individuals cover different dates or variables,
    and :class:`MissingCell` when a single cell is absent.
    """
    cells = {}
    individuals, variables, dates = {}, {}, set()
    per_ind_dates, per_ind_vars = {}, {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty file") from None
        if tuple(h.strip().lower() for h in header) != HEADER:
            raise ParseError(1, f"header must be {','.join(HEADER)}, got {','.join(header)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(line, f"expected 4 fields, got {len(row)}")
            ind, date_s, var, val_s = (c.strip() for c in row)
            if not ind or not var:
                raise ParseError(line, "empty individual or variable")
            date = _parse_date(date_s, line)
            try:
                value = float(val_s)
            except ValueError:
                raise ParseError(line, f"value {val_s!r} is not a number") from None
            if not np.isfinite(value):
                raise ParseError(line, f"value {val_s!r} is not finite")
            key = (ind, date, var)
            if key in cells:
                raise DuplicateKey(f"duplicate row for individual={ind}, date={date.isoformat()}, "
                                   f"variable={var} (line {line})")
            cells[key] = value
            individuals.setdefault(ind, len(individuals))
            variables.setdefault(var, len(variables))
            dates.add(date)
            per_ind_dates.setdefault(ind, set()).add(date)
            per_ind_vars.setdefault(ind, set()).add(var)
    if not cells:
        raise ParseError(2, "no data rows")
    date_list = sorted(dates)
    all_vars = set(variables)
    for ind in individuals:
        if per_ind_dates[ind] != dates:
            missing = sorted(dates - per_ind_dates[ind])
            raise RaggedPanel(f"individual {ind} lacks {len(missing)} date(s), first {missing[0].isoformat()}")
        if per_ind_vars[ind] != all_vars:
            raise RaggedPanel(f"individual {ind} lacks variable(s) {sorted(all_vars - per_ind_vars[ind])}")
    N, T0, n = len(individuals), len(date_list), len(variables)
    levels = np.empty((N, T0, n))
    for ind, i in individuals.items():
        for t, d in enumerate(date_list):
            for var, j in variables.items():
                try:
                    levels[i, t, j] = cells[(ind, d, var)]
                except KeyError:
                    raise MissingCell(
                        f"no value for individual={ind}, date={d.isoformat()}, variable={var}"
                    ) from None
    return PanelData(levels, deterministic_terms(T0, deterministic), list(individuals),
                     list(variables), [d.isoformat() for d in date_list])


def export_csv(data: PanelData, path, dates: Optional[list] = None) -> None:
    """Write ``data`` in the long format accepted by :func:`ingest_csv`."""
    if dates is None:
        dates = data.dates or [
            (dt.date(2000, 1, 1) + dt.timedelta(days=t)).isoformat() for t in range(data.T0)
        ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for i, ind in enumerate(data.individuals):
            for t, d in enumerate(dates):
                for j, var in enumerate(data.variables):
                    w.writerow([ind, d, var, repr(float(data.levels[i, t, j]))])


def minmax_scale(data: PanelData, lo: float = 1.0, hi: float = 100.0):
    """Rescale every (individual, variable) series to ``[lo, hi]``.

    Returns the scaled data and the per-series ``(min, max)`` used.
    """
    mn = data.levels.min(axis=1, keepdims=True)
    mx = data.levels.max(axis=1, keepdims=True)
    span = np.where(mx > mn, mx - mn, 1.0)
    scaled = lo + (hi - lo) * (data.levels - mn) / span
    out = PanelData(scaled, data.deterministic.copy(), list(data.individuals),
                    list(data.variables), list(data.dates))
    return out, {"min": mn[:, 0, :].tolist(), "max": mx[:, 0, :].tolist(), "range": [lo, hi]}


def write_rows_csv(path, rows, fields) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def ensure_parent(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p
