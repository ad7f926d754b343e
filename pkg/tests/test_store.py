import hashlib
import os
import sqlite3

import pytest

from cift.errors import ConfigurationError, SchemaVersionError
from cift.store import ALL_TABLES, TABLE_COLUMNS, Operation, init_case, verify_evidence

BOOTSTRAP = "https://pitangui.amazon.com/api/bootstrap"


def test_new_case_has_eight_empty_tables(tmp_path):
    case = init_case(tmp_path / "c")
    assert (tmp_path / "c" / "evidence").is_dir()
    assert (tmp_path / "c" / "case.db").is_file()
    assert set(case.row_counts()) == set(ALL_TABLES)
    assert len(ALL_TABLES) == 8
    assert sum(case.row_counts().values()) == 0


def test_default_case_dir_expands_home(tmp_path, monkeypatch):
    monkeypatch.setenv("HOME", str(tmp_path))
    case = init_case("~/.CIFT-Result/")
    assert case.base_dir == tmp_path / ".CIFT-Result"


def test_reopen_preserves_rows(tmp_path):
    case = init_case(tmp_path / "c")
    case.store_raw_artifact(Operation.CLOUD, BOOTSTRAP, "A Bootstrap Account", b"{}", "json")
    before = case.row_counts()
    case.close()
    again = init_case(tmp_path / "c")
    assert again.row_counts() == before


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_read_only_dir_is_configuration_error(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    try:
        with pytest.raises(ConfigurationError):
            init_case(ro / "case")
    finally:
        ro.chmod(0o700)


def test_path_through_a_file_is_configuration_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigurationError):
        init_case(blocker / "case")


def test_unknown_schema_is_refused(tmp_path):
    d = tmp_path / "c"
    d.mkdir()
    with sqlite3.connect(d / "case.db") as conn:
        conn.execute("CREATE TABLE something (x)")
    with pytest.raises(SchemaVersionError):
        init_case(d)


def test_future_schema_version_is_refused(tmp_path):
    case = init_case(tmp_path / "c")
    case.execute("UPDATE CASE_META SET value = '99' WHERE key = 'schema_version'")
    case._conn.commit()
    case.close()
    with pytest.raises(SchemaVersionError):
        init_case(tmp_path / "c")


def test_store_bootstrap_artifact(case):
    body = b'{"authentication": {}}'
    art = case.store_raw_artifact(Operation.CLOUD, BOOTSTRAP, "A Bootstrap Account", body, "json")
    assert art.saved_path.endswith(".json")
    assert art.saved_path == f"evidence/{hashlib.sha1(BOOTSTRAP.encode()).hexdigest()}.json"
    assert art.sha1 == hashlib.sha1(body).hexdigest()
    assert len(art.saved_timestamp) == 19
    assert case.row_counts()["ACQUIRED_FILE"] == 1


def test_empty_content_digest(case):
    art = case.store_raw_artifact(Operation.CLOUD, "x", "empty", b"", "bin")
    assert art.sha1 == "da39a3ee5e6b4b0d3255bfef95601890afd80709"


def test_store_twice_returns_original_row(case):
    a = case.store_raw_artifact(Operation.CLOUD, BOOTSTRAP, "d", b"1", "json")
    b = case.store_raw_artifact(Operation.CLOUD, BOOTSTRAP, "d", b"1", "json")
    assert a == b
    assert len(list(case.evidence_dir.iterdir())) == 1


def test_same_source_new_content_never_overwrites(case):
    a = case.store_raw_artifact(Operation.CLOUD, BOOTSTRAP, "d", b"first", "json")
    b = case.store_raw_artifact(Operation.CLOUD, BOOTSTRAP, "d", b"second", "json")
    assert a.id < b.id
    assert a.saved_path != b.saved_path
    assert case.read_artifact(a) == b"first"
    assert verify_evidence(case) == []


def test_size_limit(tmp_path):
    case = init_case(tmp_path / "c", max_artifact_size=4)
    with pytest.raises(ValueError):
        case.store_raw_artifact(Operation.CLOUD, "x", "d", b"12345", "bin")
    assert case.row_counts()["ACQUIRED_FILE"] == 0


def test_verify_detects_truncation_and_missing(case):
    a = case.store_raw_artifact(Operation.CLOUD, "a", "d", b"alpha", "bin")
    b = case.store_raw_artifact(Operation.CLOUD, "b", "d", b"bravo", "bin")
    assert verify_evidence(case) == []
    case.artifact_path(a).write_bytes(b"alp")
    [v] = verify_evidence(case)
    assert (v.artifact_id, v.kind) == (a.id, "mismatch")
    assert v.actual_sha1 == hashlib.sha1(b"alp").hexdigest()
    case.artifact_path(b).unlink()
    kinds = {(v.artifact_id, v.kind) for v in verify_evidence(case)}
    assert kinds == {(a.id, "mismatch"), (b.id, "missing")}


def test_content_rows_need_existing_source(case):
    with pytest.raises(sqlite3.IntegrityError):
        case.insert_rows("SETTING_MISC", [{"source_id": 42, "name": "x", "value": "1"}])


def test_insert_rows_is_idempotent(case):
    art = case.store_raw_artifact(Operation.CLOUD, "a", "d", b"x", "json")
    row = {"source_id": art.id, "ssid": "S", "security_method": "WPA_PSK", "pre_shared_key": "k"}
    assert case.insert_rows("SETTING_WIFI", [row]) == 1
    assert case.insert_rows("SETTING_WIFI", [row]) == 0
    assert case.row_counts()["SETTING_WIFI"] == 1


def test_columns_follow_published_layout():
    assert TABLE_COLUMNS["SETTING_WIFI"][1:] == ("ssid", "security_method", "pre_shared_key")
    assert TABLE_COLUMNS["SKILL"][1:] == ("title", "developer_name", "account_linked", "release_date")
    assert len(TABLE_COLUMNS["COMPATIBLE_DEVICE"]) == 13
