"""Client-side ingestion: Android app data, iOS backup files, Chrome cache.

Every source file is preserved in the evidence library before it is parsed,
and rows are attributed to the preserved copy they were derived from.
"""

from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import catalog as _catalog
from . import chrome_cache, companion_db, webview
from .companion_db import FindingKind, Platform
from .errors import FormatError, PayloadError
from .normalize import (NormalizeContext, NormalizedRecord, NormalizeResult, Normalizer, canonical_json,
                        context_order, correlate, write_result)
from .store import CaseDatabase, Operation, RawArtifact

log = logging.getLogger(__name__)

ANDROID_PACKAGE = "com.amazon.dee.app"
IOS_PACKAGE = "com.amazon.echo"
ANDROID_TOKEN_DB = Path("databases/map_data_storage.db")
ANDROID_TODO_DB = Path("databases/DataStore.db")
ANDROID_WEBVIEW_CACHE = Path("app_webview/Cache")
IOS_TODO_DB = Path("Documents/LocalData.sqlite")

_CONTENT_EXT = {"application/json": "json", "text/json": "json", "audio/wav": "wav", "audio/x-wav": "wav",
                "audio/mpeg": "mp3", "text/html": "html", "text/plain": "txt"}


@dataclass
class IngestReport:
    operation: Operation
    root: str
    files_preserved: int = 0
    cache_entries: int = 0
    findings: Counter = field(default_factory=Counter)
    events: int = 0
    rows_added: int = 0
    client_only: int = 0
    failures: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)

    def format(self) -> str:
        lines = [f"{self.operation.value} {self.root}",
                 f"  files preserved: {self.files_preserved}",
                 f"  cache entries: {self.cache_entries}"]
        for kind, n in sorted(self.findings.items()):
            lines.append(f"  {kind}: {n}")
        lines += [f"  timeline events: {self.events}", f"  rows added: {self.rows_added}",
                  f"  client-only events: {self.client_only}"]
        if self.missing:
            lines.append(f"  not present: {', '.join(self.missing)}")
        if self.failures:
            lines.append(f"  unparseable: {len(self.failures)}")
        return "\n".join(lines)


def _preserve(case: CaseDatabase, op: Operation, path: Path, desc: str) -> RawArtifact:
    ext = path.suffix.lstrip(".") or "bin"
    return case.store_raw_artifact(op, str(path.resolve()), desc, path.read_bytes(), ext)


def _apply(case: CaseDatabase, result: NormalizeResult, report: IngestReport) -> None:
    report.rows_added += write_result(case, result)
    report.events += len(result.events)


def _normalize_body(case: CaseDatabase, normalizer: Normalizer, artifact: RawArtifact, url: str,
                    body: bytes, report: IngestReport) -> None:
    descriptor = _catalog.match_url(url)
    if descriptor is None or descriptor.name == "utterance/audio/data":
        return
    try:
        result = normalizer.normalize(body, descriptor, artifact.id, artifact.operation,
                                      filename=artifact.saved_path, src_path=url)
    except PayloadError as exc:
        report.failures.append(f"{url}: {exc}")
        return
    _apply(case, result, report)


def _ordered(items, url_of):
    # context-bearing endpoints first so later events get device time zones
    return sorted(items, key=lambda x: context_order(_catalog.match_url(url_of(x))))


def _todo_findings(case: CaseDatabase, normalizer: Normalizer, artifact: RawArtifact,
                   findings: list[companion_db.CompanionDbFinding], op: Operation, report: IngestReport) -> None:
    result = NormalizeResult()
    for f in findings:
        report.findings[f.kind.value] += 1
        if f.kind is FindingKind.UNKNOWN_TABLE_DUMP:
            result.records.append(_dump_record(artifact, f))
            continue
        item = companion_db.finding_as_item(f)
        result.extend(normalizer.todo_item(item, artifact.id, op, filename=artifact.saved_path,
                                           list_type=item["type"]))
    _apply(case, result, report)


def _dump_record(artifact: RawArtifact, finding: companion_db.CompanionDbFinding):
    return NormalizedRecord("SETTING_MISC", artifact.id,
                            {"name": f"unknown_table:{finding.source_table}",
                             "value": canonical_json(finding.fields)})


def ingest_token_db(case: CaseDatabase, path: str | os.PathLike, report: IngestReport,
                    op: Operation = Operation.COMPANION_APP_ANDROID) -> None:
    path = Path(path)
    artifact = _preserve(case, op, path, "companion app token database")
    report.files_preserved += 1
    try:
        findings = companion_db.extract_android_token_db(path)
    except FormatError as exc:
        report.failures.append(f"{path}: {exc}")
        return
    result = NormalizeResult()
    for f in findings:
        report.findings[f.kind.value] += 1
        if f.kind is FindingKind.UNKNOWN_TABLE_DUMP:
            result.records.append(_dump_record(artifact, f))
        else:
            result.records.append(NormalizedRecord("SETTING_MISC", artifact.id, {
                "name": "active_user_token",
                "value": canonical_json({k: f.fields.get(k, "") for k in ("account", "name", "secret_sha1")}),
            }))
    _apply(case, result, report)


def ingest_todo_db(case: CaseDatabase, path: str | os.PathLike, platform: Platform, report: IngestReport,
                   normalizer: Normalizer | None = None) -> None:
    path = Path(path)
    op = Operation.COMPANION_APP_IOS if platform is Platform.IOS_LOCALDATA else Operation.COMPANION_APP_ANDROID
    normalizer = normalizer or Normalizer(NormalizeContext.from_case(case))
    artifact = _preserve(case, op, path, "companion app to-do database")
    report.files_preserved += 1
    try:
        findings = companion_db.extract_todo_db(path, platform)
    except FormatError as exc:
        report.failures.append(f"{path}: {exc}")
        return
    _todo_findings(case, normalizer, artifact, findings, op, report)


def ingest_webview_cache(case: CaseDatabase, directory: str | os.PathLike, report: IngestReport,
                         normalizer: Normalizer | None = None,
                         profiles: Sequence[webview.CacheProfile] = webview.DEFAULT_PROFILES) -> None:
    normalizer = normalizer or Normalizer(NormalizeContext.from_case(case))
    entries = webview.scan_cache_dir(directory, profiles=profiles)
    report.failures += [f"{p}: {e}" for p, e in entries.failures]
    report.cache_entries += len(entries)
    for entry in _ordered(entries, lambda e: e.original_url):
        artifact = _preserve(case, Operation.COMPANION_APP_ANDROID, Path(entry.source_file), "WebView cache file")
        report.files_preserved += 1
        if entry.corrupt:
            report.failures.append(f"{entry.source_file}: {'; '.join(entry.diagnostics)}")
        _normalize_body(case, normalizer, artifact, entry.original_url, entry.decoded_payload, report)


def _find(root: Path, rel: Path, package: str) -> Path | None:
    for base in (root, root / package):
        if (base / rel).exists():
            return base / rel
    return None


def ingest_android(case: CaseDatabase, root: str | os.PathLike,
                   profiles: Sequence[webview.CacheProfile] = webview.DEFAULT_PROFILES) -> IngestReport:
    """Ingest an Android app-data directory (``com.amazon.dee.app`` or its parent)."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(root)
    report = IngestReport(Operation.COMPANION_APP_ANDROID, str(root))
    normalizer = Normalizer(NormalizeContext.from_case(case))
    # WebView caches first: they may carry the device preferences later events are labelled with.
    cache = _find(root, ANDROID_WEBVIEW_CACHE, ANDROID_PACKAGE)
    if cache is not None:
        ingest_webview_cache(case, cache, report, normalizer, profiles)
    else:
        report.missing.append(str(ANDROID_WEBVIEW_CACHE))
    token_db = _find(root, ANDROID_TOKEN_DB, ANDROID_PACKAGE)
    if token_db is not None:
        ingest_token_db(case, token_db, report)
    else:
        report.missing.append(str(ANDROID_TOKEN_DB))
    todo_db = _find(root, ANDROID_TODO_DB, ANDROID_PACKAGE)
    if todo_db is not None:
        ingest_todo_db(case, todo_db, Platform.ANDROID_DATASTORE, report, normalizer)
    else:
        report.missing.append(str(ANDROID_TODO_DB))
    report.client_only = correlate(case)
    return report


def ingest_ios(case: CaseDatabase, root: str | os.PathLike) -> IngestReport:
    """Ingest files already extracted from an iTunes-style backup."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(root)
    report = IngestReport(Operation.COMPANION_APP_IOS, str(root))
    todo_db = _find(root, IOS_TODO_DB, IOS_PACKAGE)
    if todo_db is not None:
        ingest_todo_db(case, todo_db, Platform.IOS_LOCALDATA, report)
    else:
        report.missing.append(str(IOS_TODO_DB))
    report.client_only = correlate(case)
    return report


def _body_ext(entry: chrome_cache.ChromeEntry) -> str:
    ctype = entry.header("Content-Type").split(";")[0].strip().lower()
    return _CONTENT_EXT.get(ctype, "bin")


def ingest_chrome(case: CaseDatabase, directory: str | os.PathLike,
                  url_filter=None) -> IngestReport:
    """Ingest a Chrome block-file cache directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NotADirectoryError(directory)
    op = Operation.COMPANION_BROWSER_CHROME
    report = IngestReport(op, str(directory))
    handle = chrome_cache.open_cache(directory)
    for path in handle.files():
        _preserve(case, op, path, "Chrome cache file")
        report.files_preserved += 1
    entries = chrome_cache.read_entries(handle, url_filter)
    report.failures += handle.diagnostics
    report.cache_entries = len(entries)
    normalizer = Normalizer(NormalizeContext.from_case(case))
    base = str(directory.resolve())
    for entry in _ordered(entries, lambda e: e.url):
        src = f"{base}::{entry.key}"
        artifact = case.store_raw_artifact(op, src, "Chrome cached response body", entry.decoded_body,
                                           _body_ext(entry))
        header_text = "\n".join([entry.status_line] + [f"{k}: {v}" for k, v in entry.http_headers.items()])
        case.store_raw_artifact(op, src + "#headers", "Chrome cached response headers",
                                header_text.encode("latin-1", errors="replace") + b"\n", "txt")
        report.files_preserved += 2
        _normalize_body(case, normalizer, artifact, entry.url, entry.decoded_body, report)
    report.client_only = correlate(case)
    return report
