"""Timeline and case exports: l2t_csv for timeline tools, JSON Lines for everything else."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Any

from .errors import ExportError
from .store import TABLE_COLUMNS, CaseDatabase

L2T_COLUMNS = ("date", "time", "timezone", "MACB", "source", "sourcetype", "type", "user", "host",
               "short", "desc", "version", "filename", "inode", "notes", "format", "extra")
L2T_VERSION = "2"
# TIMELINE columns an l2t_csv row can reproduce exactly
SHARED_COLUMNS = tuple(c for c in TABLE_COLUMNS["TIMELINE"] if c != "source_id")


def _open(out: str | os.PathLike, newline: str | None = None):
    try:
        return open(out, "w", encoding="utf-8", newline=newline)
    except OSError as exc:
        raise ExportError(f"cannot write {out}: {exc}") from exc


def _l2t_row(ev: dict[str, Any]) -> list[str]:
    year, month, day = ev["date"].split("-")
    hms, _, ms = ev["time"].partition(".")
    extra = f"ms={ms or '000'}" + (f"; {ev['extra']}" if ev["extra"] else "")
    row = dict(ev, date=f"{month}/{day}/{year}", time=hms, version=L2T_VERSION, inode="", extra=extra)
    return [row[c] for c in L2T_COLUMNS]


def export_l2t_csv(case: CaseDatabase, out: str | os.PathLike) -> int:
    """Write the timeline as l2t_csv; milliseconds travel in ``extra`` as ``ms=NNN``."""
    events = case.timeline()  # ordered by date, time, source_id
    with _open(out, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(L2T_COLUMNS)
        for ev in events:
            writer.writerow(_l2t_row(ev))
    return len(events)


def read_l2t_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    """Parse an exported file back into TIMELINE-shaped dicts (shared columns only)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != L2T_COLUMNS:
            raise ValueError("not an l2t_csv export")
        out = []
        for values in reader:
            row = dict(zip(header, values))
            month, day, year = row["date"].split("/")
            ms, _, extra = row["extra"].partition("; ")
            ev = {c: row[c] for c in SHARED_COLUMNS if c in row}
            ev["date"] = f"{year}-{month}-{day}"
            ev["time"] = f"{row['time']}.{ms.removeprefix('ms=')}"
            ev["extra"] = extra
            out.append(ev)
    return out


def export_jsonl(case: CaseDatabase, out: str | os.PathLike) -> int:
    """One object per timeline event and per content-table row, tagged with ``table``."""
    count = 0
    with _open(out) as fh:
        for ev in case.timeline():
            obj = {"table": "TIMELINE"}
            obj.update((c, ev[c]) for c in TABLE_COLUMNS["TIMELINE"])
            obj["client_only"] = bool(ev["client_only"])
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
            count += 1
        for table in TABLE_COLUMNS:
            if table == "TIMELINE":
                continue
            for row in case.rows(table):
                obj = {"table": table}
                obj.update((c, row[c]) for c in TABLE_COLUMNS[table])
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
                count += 1
    return count


def read_jsonl(path: str | os.PathLike) -> list[dict[str, Any]]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
