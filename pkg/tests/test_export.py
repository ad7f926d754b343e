import csv
import os

import pytest

from cift.errors import ExportError
from cift.export import L2T_COLUMNS, SHARED_COLUMNS, export_jsonl, export_l2t_csv, read_jsonl, read_l2t_csv
from cift.ingest import ingest_chrome
from cift.store import TABLE_COLUMNS

from conftest import CHROME_CACHE


def test_empty_case_l2t_is_header_only(case, tmp_path):
    out = tmp_path / "tl.csv"
    assert export_l2t_csv(case, out) == 0
    assert out.read_bytes() == (",".join(L2T_COLUMNS) + "\r\n").encode()


def test_empty_case_jsonl(case, tmp_path):
    out = tmp_path / "case.jsonl"
    assert export_jsonl(case, out) == 0
    assert out.read_text() == ""


def test_l2t_round_trip(cloud_case, tmp_path):
    case, _ = cloud_case
    out = tmp_path / "tl.csv"
    n = export_l2t_csv(case, out)
    events = case.timeline()
    assert n == len(events) > 0
    back = read_l2t_csv(out)
    assert back == [{c: ev[c] for c in SHARED_COLUMNS} for ev in events]


def test_l2t_row_shape(cloud_case, tmp_path):
    case, _ = cloud_case
    out = tmp_path / "tl.csv"
    export_l2t_csv(case, out)
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert all(len(r) == 17 for r in rows)
    first = dict(zip(rows[0], rows[1]))
    assert first["version"] == "2"
    month, day, year = first["date"].split("/")
    assert len(year) == 4 and len(month) == 2 and first["extra"].startswith("ms=")


def test_jsonl_counts(cloud_case, tmp_path):
    case, _ = cloud_case
    out = tmp_path / "case.jsonl"
    n = export_jsonl(case, out)
    counts = case.row_counts()
    expected = sum(v for t, v in counts.items() if t in TABLE_COLUMNS)
    objs = read_jsonl(out)
    assert n == len(objs) == expected
    assert objs[0]["table"] == "TIMELINE"
    assert {o["table"] for o in objs} - set(TABLE_COLUMNS) == set()


def test_jsonl_client_only_is_boolean(case, tmp_path):
    ingest_chrome(case, CHROME_CACHE)
    out = tmp_path / "case.jsonl"
    export_jsonl(case, out)
    timeline = [o for o in read_jsonl(out) if o["table"] == "TIMELINE"]
    assert timeline and all(o["client_only"] is True for o in timeline)


def test_unwritable_path(case, tmp_path):
    with pytest.raises(ExportError):
        export_l2t_csv(case, tmp_path / "missing-dir" / "tl.csv")
    with pytest.raises(ExportError):
        export_jsonl(case, tmp_path)  # a directory


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores file permissions")
def test_read_only_target(case, tmp_path):
    target = tmp_path / "ro.csv"
    target.write_text("")
    target.chmod(0o444)
    with pytest.raises(ExportError):
        export_l2t_csv(case, target)
