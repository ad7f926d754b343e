"""Forensic acquisition and normalization of Alexa cloud and companion-client artifacts."""

__version__ = "0.1.0"

from .acquire import AcquisitionReport, Session, acquire_all, create_session, session_from_cookie_file
from .catalog import ApiDescriptor, resolve
from .chrome_cache import open_cache, read_entries
from .companion_db import extract_android_token_db, extract_todo_db
from .export import export_jsonl, export_l2t_csv
from .ingest import ingest_android, ingest_chrome, ingest_ios
from .normalize import Normalizer, correlate, epoch_to_utc
from .store import CaseDatabase, Operation, init_case, verify_evidence
from .webview import parse_cache_file, scan_cache_dir

__all__ = [
    "AcquisitionReport", "Session", "acquire_all", "create_session", "session_from_cookie_file",
    "ApiDescriptor", "resolve", "open_cache", "read_entries",
    "extract_android_token_db", "extract_todo_db", "export_jsonl", "export_l2t_csv",
    "ingest_android", "ingest_chrome", "ingest_ios", "Normalizer", "correlate", "epoch_to_utc",
    "CaseDatabase", "Operation", "init_case", "verify_evidence", "parse_cache_file", "scan_cache_dir",
]
