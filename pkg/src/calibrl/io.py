"""CSV ingestion and report emission."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .demand import DemandPanel

SCHEMA_VERSION = 1


class CsvError(ValueError):
    """A CSV file does not match its expected schema."""


def _date(s: str) -> dt.date:
    return dt.date.fromisoformat(s)


CASTS: dict[str, Callable[[str], object]] = {"float": float, "int": int, "str": str, "date": _date}


def ingest_csv(path: str | Path, schema: Mapping[str, str]) -> list[dict]:
    """Read ``path`` and cast the columns named in ``schema`` (name -> type).

    Line numbers in errors count the header as line 1.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvError(f"{path}: file is empty") from None
        missing = [c for c in schema if c not in header]
        if missing:
            raise CsvError(f"{path}: missing columns {missing}")
        idx = {c: header.index(c) for c in schema}
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not v.strip() for v in rec):
                continue
            if len(rec) != len(header):
                raise CsvError(f"{path}: line {line}: expected {len(header)} fields, got {len(rec)}")
            row = {}
            for c, kind in schema.items():
                cell = rec[idx[c]].strip()
                try:
                    row[c] = CASTS[kind](cell)
                except ValueError:
                    raise CsvError(f"{path}: line {line}: column {c!r}: cannot read {cell!r} as {kind}") from None
            rows.append(row)
    if not rows:
        raise CsvError(f"{path}: no data rows")
    return rows


SALES_SCHEMA = {"date": "date", "item_id": "str", "units_sold": "float"}
FORECAST_SCHEMA = {"mean": "float", "stddev": "float", "outcome": "float"}


def load_sales(path: str | Path) -> DemandPanel:
    """Daily sales per item; days missing for an item count as zero sales."""
    rows = ingest_csv(path, SALES_SCHEMA)
    start = min(r["date"] for r in rows)
    n_days = (max(r["date"] for r in rows) - start).days + 1
    items = sorted({r["item_id"] for r in rows})
    pos = {it: i for i, it in enumerate(items)}
    demand = np.zeros((len(items), n_days), dtype=np.int64)
    for r in rows:
        if r["units_sold"] < 0:
            raise CsvError(f"{path}: negative sales for {r['item_id']} on {r['date']}")
        demand[pos[r["item_id"]], (r["date"] - start).days] += int(round(r["units_sold"]))
    dates = [start + dt.timedelta(days=i) for i in range(n_days)]
    return DemandPanel(dates, demand, items)


def load_dataset(path: str | Path, label: str) -> tuple[np.ndarray, np.ndarray]:
    """Numeric feature columns plus an integer label column."""
    with Path(path).open(newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise CsvError(f"{path}: file is empty")
    header = [h.strip() for h in header]
    if label not in header:
        raise CsvError(f"{path}: missing label column {label!r}")
    schema = {c: "float" for c in header if c != label}
    schema[label] = "int"
    rows = ingest_csv(path, schema)
    X = np.array([[r[c] for c in header if c != label] for r in rows])
    return X, np.array([r[label] for r in rows])


# -- reports ------------------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def content_hash(config: dict, files: Iterable[str | Path] = ()) -> str:
    h = hashlib.sha256(json.dumps(config, sort_keys=True).encode())
    for f in files:
        h.update(Path(f).read_bytes())
    return h.hexdigest()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def emit_report(report: dict, out_dir: str | Path, *, tables: Mapping[str, tuple] | None = None,
                timings: dict | None = None, force: bool = False) -> list[Path]:
    """Write ``report.json`` plus one CSV per table into ``out_dir``.

    Refuses to overwrite existing outputs unless ``force``. Timings go to a
    separate ``timings.json`` so the report itself stays reproducible.
    """
    out = Path(out_dir)
    tables = dict(tables or {})
    targets = [out / "report.json"] + [out / f"{name}.csv" for name in tables]
    if timings is not None:
        targets.append(out / "timings.json")
    clobber = [p for p in targets if p.exists()]
    if clobber and not force:
        raise FileExistsError(f"refusing to overwrite {clobber[0]} (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    body = {"schema_version": SCHEMA_VERSION, **report}
    targets[0].write_text(canonical_json(body))
    for name, (header, rows) in tables.items():
        write_csv(out / f"{name}.csv", header, rows)
    if timings is not None:
        (out / "timings.json").write_text(canonical_json(timings))
    return targets
