import subprocess
import sys
from pathlib import Path

import pytest

from cift.acquire import acquire_all, create_session
from cift.cli import OperationInput, _segments, run
from cift.ingest import ingest_android, ingest_chrome
from cift.store import Operation, init_case
from cift.testing import VALID_EMAIL, VALID_PASSWORD
from cift.testing.appdata import build_android_app_dir

from conftest import CHROME_CACHE, portable_dump


def cli(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_no_command_is_usage_error(capsys):
    code, _, err = cli(capsys)
    assert code == 2 and "no command" in err


def test_unknown_option_is_usage_error(capsys, tmp_path):
    code, _, _ = cli(capsys, "--case", tmp_path / "c", "export", "--format", "xml", "--out", tmp_path / "x")
    assert code == 2


def test_cloud_without_credentials(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("CIFT_EMAIL", raising=False)
    monkeypatch.delenv("CIFT_PASSWORD", raising=False)
    code, _, err = cli(capsys, "--case", tmp_path / "c", "cloud", "--base-url", "http://127.0.0.1:9")
    assert code == 2 and "--cookie-file" in err


def test_missing_directory_is_usage_error(capsys, tmp_path):
    assert cli(capsys, "--case", tmp_path / "c", "app-ios", tmp_path / "nope")[0] == 2


def test_segments_respect_option_values():
    assert _segments(["--case", "export", "export", "--out", "verify", "verify"]) == [
        ["--case", "export"], ["export", "--out", "verify"], ["verify"]]


def test_operation_input_redacts_password():
    item = OperationInput(Operation.CLOUD, (VALID_EMAIL, VALID_PASSWORD))
    assert VALID_PASSWORD not in repr(item)
    with pytest.raises(ValueError):
        OperationInput(Operation.CLOUD, (VALID_EMAIL,))


def test_bad_login_exits_1(capsys, tmp_path, service):
    code, _, err = cli(capsys, "--case", tmp_path / "c", "cloud", "--base-url", service.base_url,
                       "--email", VALID_EMAIL, "--password", "wrong")
    assert code == 1 and "error: cloud" in err


def test_export_empty_case(capsys, tmp_path):
    out = tmp_path / "tl.csv"
    code, stdout, _ = cli(capsys, "--case", tmp_path / "c", "export", "--format", "l2t_csv", "--out", out)
    assert code == 0 and "0 rows" in stdout
    assert out.read_text().count("\n") == 1


def test_app_android_then_verify(capsys, tmp_path):
    app = build_android_app_dir(tmp_path / "src")
    code, out, _ = cli(capsys, "--case", tmp_path / "c", "app-android", app, "verify")
    assert code == 0
    assert "COMPANION_APP_ANDROID" in out and "0 violations" in out


def test_verify_reports_tampering(capsys, tmp_path):
    cli(capsys, "--case", tmp_path / "c", "browser-chrome", CHROME_CACHE)
    victim = next((tmp_path / "c" / "evidence").rglob("*.json"))
    victim.write_bytes(b"tampered")
    code, _, err = cli(capsys, "--case", tmp_path / "c", "verify")
    assert code == 1 and "mismatch" in err


def test_cli_matches_library(capsys, tmp_path, service, monkeypatch):
    app = build_android_app_dir(tmp_path / "src")
    monkeypatch.setattr("cift.acquire._now_ms", lambda: 1_700_000_000_000)
    monkeypatch.setenv("CIFT_EMAIL", VALID_EMAIL)
    monkeypatch.setenv("CIFT_PASSWORD", VALID_PASSWORD)
    code, _, _ = cli(capsys, "--case", tmp_path / "a", "cloud", "--base-url", service.base_url,
                     "app-android", app, "browser-chrome", CHROME_CACHE)
    assert code == 0

    lib = init_case(tmp_path / "b")
    acquire_all(create_session(service.base_url, VALID_EMAIL, VALID_PASSWORD), lib)
    ingest_android(lib, app)
    ingest_chrome(lib, CHROME_CACHE)
    via_cli = init_case(tmp_path / "a")
    a, b = portable_dump(via_cli), portable_dump(lib)
    assert a.keys() == b.keys()
    for table in a:
        assert a[table] == b[table], table


def test_password_never_persisted(capsys, tmp_path, service):
    case_dir = tmp_path / "c"
    code, out, err = cli(capsys, "-v", "-v", "--case", case_dir, "cloud", "--base-url", service.base_url,
                         "--email", VALID_EMAIL, "--password", VALID_PASSWORD,
                         "export", "--format", "jsonl", "--out", tmp_path / "x.jsonl",
                         "export", "--format", "l2t_csv", "--out", tmp_path / "x.csv")
    assert code == 0
    needle = VALID_PASSWORD.encode()
    assert needle not in (out + err).encode()
    for p in Path(tmp_path).rglob("*"):
        if p.is_file():
            assert needle not in p.read_bytes(), p


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cift", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("cift ")
