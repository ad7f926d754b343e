"""Companion-app SQLite databases: the Android token store and the to-do stores.

Which table and columns hold what is read from ``data/mappings.ini``. When a
database does not match its mapping every table is dumped generically instead.
Databases are opened read-only and never modified.
"""

from __future__ import annotations

import configparser
import enum
import hashlib
import logging
import os
import sqlite3
from dataclasses import dataclass
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ConfigurationError, UnrecognizedFormatError

log = logging.getLogger(__name__)

SQLITE_MAGIC = b"SQLite format 3\x00"
_COREDATA_EPOCH_MS = 978_307_200_000


class Platform(str, enum.Enum):
    ANDROID_TOKEN = "ANDROID_TOKEN"
    ANDROID_DATASTORE = "ANDROID_DATASTORE"
    IOS_LOCALDATA = "IOS_LOCALDATA"


class FindingKind(str, enum.Enum):
    ACTIVE_USER_TOKEN = "ACTIVE_USER_TOKEN"
    TODO_ITEM = "TODO_ITEM"
    SHOPPING_ITEM = "SHOPPING_ITEM"
    UNKNOWN_TABLE_DUMP = "UNKNOWN_TABLE_DUMP"


@dataclass
class CompanionDbFinding:
    kind: FindingKind
    fields: dict[str, Any]
    source_file: str
    source_table: str


@dataclass(frozen=True)
class DbMapping:
    name: str
    file: str
    platform: Platform
    kind: str
    table: str
    columns: dict[str, str]  # source column -> role
    required: tuple[str, ...] = ()
    time_unit: str = "ms"
    time_origin: str = "unix"
    provisional: bool = True

    def column_for(self, role: str) -> str | None:
        for col, r in self.columns.items():
            if r == role:
                return col
        return None

    def to_unix_ms(self, value: Any) -> int | None:
        """Convert a stored timestamp to Unix epoch milliseconds."""
        if value is None or value == "":
            return None
        try:
            num = Decimal(str(value))
        except ArithmeticError:
            return None
        if self.time_unit == "s":
            num *= 1000
        ms = int(num.to_integral_value())
        if self.time_origin == "coredata":
            ms += _COREDATA_EPOCH_MS
        return ms


def _parse_mappings(text: str) -> dict[Platform, DbMapping]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(text)
    out = {}
    for name in parser.sections():
        sec = parser[name]
        try:
            cols = {}
            for pair in sec["columns"].replace("\n", " ").split(","):
                if pair.strip():
                    col, role = pair.strip().split(":")
                    cols[col.strip()] = role.strip()
            m = DbMapping(name=name, file=sec["file"], platform=Platform(sec["platform"]), kind=sec["kind"],
                          table=sec["table"], columns=cols,
                          required=tuple(r.strip() for r in sec.get("required", "").split(",") if r.strip()),
                          time_unit=sec.get("time_unit", "ms"), time_origin=sec.get("time_origin", "unix"),
                          provisional=sec.getboolean("provisional", fallback=True))
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"mapping [{name}]: {exc}") from exc
        if m.time_unit not in ("ms", "s") or m.time_origin not in ("unix", "coredata"):
            raise ConfigurationError(f"mapping [{name}]: bad time unit/origin")
        out[m.platform] = m
    return out


def load_mappings(path: str | os.PathLike | None = None) -> dict[Platform, DbMapping]:
    if path is None:
        text = resources.files("cift").joinpath("data/mappings.ini").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return _parse_mappings(text)


def open_readonly(path: str | os.PathLike) -> sqlite3.Connection:
    """Open an SQLite file without any chance of writing to it."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(len(SQLITE_MAGIC))
    except OSError as exc:
        raise UnrecognizedFormatError(f"{path}: {exc}") from exc
    if head != SQLITE_MAGIC:
        raise UnrecognizedFormatError(f"{path}: not an SQLite database")
    uri = path.resolve().as_uri() + "?mode=ro&immutable=1"
    conn = sqlite3.connect(uri, uri=True)
    conn.row_factory = sqlite3.Row
    try:
        conn.execute("SELECT count(*) FROM sqlite_master").fetchone()
    except sqlite3.DatabaseError as exc:
        conn.close()
        raise UnrecognizedFormatError(f"{path}: {exc}") from exc
    return conn


def _tables(conn: sqlite3.Connection) -> list[str]:
    rows = conn.execute("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' "
                        "ORDER BY name").fetchall()
    return [r[0] for r in rows]


def _columns(conn: sqlite3.Connection, table: str) -> set[str]:
    return {r[1] for r in conn.execute(f'PRAGMA table_info("{table}")')}


def _matches(conn: sqlite3.Connection, mapping: DbMapping) -> bool:
    if mapping.table not in _tables(conn):
        return False
    have = _columns(conn, mapping.table)
    needed = [c for c, role in mapping.columns.items() if role in mapping.required] or list(mapping.columns)
    return all(c in have for c in needed)


def _cell(value: Any) -> Any:
    if isinstance(value, bytes):
        return value.hex()
    return value


def dump_tables(conn: sqlite3.Connection, source_file: str) -> list[CompanionDbFinding]:
    findings = []
    for table in _tables(conn):
        for row in conn.execute(f'SELECT * FROM "{table}"'):
            findings.append(CompanionDbFinding(FindingKind.UNKNOWN_TABLE_DUMP,
                                               {k: _cell(row[k]) for k in row.keys()}, source_file, table))
    return findings


def secret_digest(value: Any) -> str:
    raw = value if isinstance(value, bytes) else str(value).encode("utf-8")
    return hashlib.sha1(raw).hexdigest()


def extract_android_token_db(path: str | os.PathLike,
                             mappings: dict[Platform, DbMapping] | None = None) -> list[CompanionDbFinding]:
    """Token rows of the logged-in account; secret values come back only as SHA-1 digests."""
    mapping = (mappings or load_mappings())[Platform.ANDROID_TOKEN]
    conn = open_readonly(path)
    try:
        if not _matches(conn, mapping):
            log.warning("%s: schema does not match mapping [%s]; dumping all tables", path, mapping.name)
            findings = dump_tables(conn, str(path))
            # never carry raw secrets out of a token store, even in a dump
            for f in findings:
                f.fields = {k: (secret_digest(v) if "token" in k.lower() and "value" in k.lower() and v is not None
                                else v) for k, v in f.fields.items()}
            return findings
        secret_col = mapping.column_for("secret")
        out = []
        for row in conn.execute(f'SELECT * FROM "{mapping.table}"'):
            fields = {}
            for col, role in mapping.columns.items():
                if col not in row.keys():
                    continue
                fields[role] = secret_digest(row[col]) if col == secret_col else _cell(row[col])
            if secret_col:
                fields["secret_sha1"] = fields.pop("secret", "")
            out.append(CompanionDbFinding(FindingKind.ACTIVE_USER_TOKEN, fields, str(path), mapping.table))
        return out
    finally:
        conn.close()


def extract_todo_db(path: str | os.PathLike, platform: Platform | str,
                    mappings: dict[Platform, DbMapping] | None = None) -> list[CompanionDbFinding]:
    """To-do and shopping items, with timestamps converted to Unix epoch milliseconds."""
    platform = Platform(platform)
    mapping = (mappings or load_mappings())[platform]
    conn = open_readonly(path)
    try:
        if not _matches(conn, mapping):
            log.warning("%s: schema does not match mapping [%s]; dumping all tables", path, mapping.name)
            return dump_tables(conn, str(path))
        out = []
        for row in conn.execute(f'SELECT * FROM "{mapping.table}"'):
            fields: dict[str, Any] = {}
            for col, role in mapping.columns.items():
                if col not in row.keys() or row[col] is None:
                    continue
                value = row[col]
                if role in ("created", "updated"):
                    value = mapping.to_unix_ms(value)
                    if value is None:
                        continue
                fields[role] = _cell(value)
            kind = FindingKind.SHOPPING_ITEM if fields.get("type") == "SHOPPING_ITEM" else FindingKind.TODO_ITEM
            out.append(CompanionDbFinding(kind, fields, str(path), mapping.table))
        return out
    finally:
        conn.close()


def finding_as_item(finding: CompanionDbFinding) -> dict[str, Any]:
    """Reshape a to-do finding into the field names the cloud todos API uses."""
    f = finding.fields
    item: dict[str, Any] = {"text": f.get("text", "")}
    if "created" in f:
        item["createdDate"] = f["created"]
    if "updated" in f:
        item["lastUpdatedDate"] = f["updated"]
    if "complete" in f:
        item["complete"] = f["complete"] in (1, "1", True, "true", "True")
    if f.get("audio_id"):
        item["originalAudioId"] = f["audio_id"]
    if f.get("customer_id"):
        item["customerId"] = f["customer_id"]
    item["type"] = "SHOPPING_ITEM" if finding.kind is FindingKind.SHOPPING_ITEM else "TASK"
    return item
