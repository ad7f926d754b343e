"""Case directory: evidence library of preserved raw files plus the normalized case database.

Layout::

    <case>/case.db
    <case>/evidence/<40-hex>.<ext>

Every preserved file is tracked by a row in ``ACQUIRED_FILE`` together with the
SHA-1 of its content. Content tables reference those rows through ``source_id``.
"""

from __future__ import annotations

import datetime
import enum
import hashlib
import logging
import os
import sqlite3
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import ConfigurationError, IntegrityError, SchemaVersionError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_MAX_ARTIFACT_SIZE = 256 * 1024 * 1024
DEFAULT_CASE_DIR = "~/.CIFT-Result/"


class Operation(str, enum.Enum):
    CLOUD = "CLOUD"
    COMPANION_APP_ANDROID = "COMPANION_APP_ANDROID"
    COMPANION_APP_IOS = "COMPANION_APP_IOS"
    COMPANION_BROWSER_CHROME = "COMPANION_BROWSER_CHROME"

    def __str__(self) -> str:
        return self.value


# Column order follows the published table layouts. ACCOUNT carries source_id
# like every other content table.
TABLE_COLUMNS: dict[str, tuple[str, ...]] = {
    "ACCOUNT": ("source_id", "timezone", "customer_email", "customer_name", "customer_id"),
    "ALEXA_DEVICE": (
        "source_id", "device_account_name", "device_account_id", "customer_id",
        "device_serial_number", "device_type", "sw_version", "mac_address",
        "address", "postal_code", "locale", "timezone",
    ),
    "SETTING_WIFI": ("source_id", "ssid", "security_method", "pre_shared_key"),
    "SETTING_MISC": ("source_id", "name", "value"),
    "SKILL": ("source_id", "title", "developer_name", "account_linked", "release_date"),
    "COMPATIBLE_DEVICE": (
        "source_id", "name", "manufacture", "model", "created", "name_modified", "desc",
        "type", "reachable", "firmware_version", "appliance_id",
        "alexa_device_serial_number", "alexa_device_type",
    ),
    "TIMELINE": (
        "source_id", "date", "time", "timezone", "MACB", "source", "sourcetype", "type",
        "user", "host", "short", "desc", "filename", "notes", "format", "extra",
    ),
}
CONTENT_TABLES = tuple(TABLE_COLUMNS)
ALL_TABLES = ("ACQUIRED_FILE",) + CONTENT_TABLES

_ACQUIRED_FILE_DDL = """
CREATE TABLE IF NOT EXISTS ACQUIRED_FILE (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    operation TEXT NOT NULL,
    src_path TEXT NOT NULL,
    "desc" TEXT NOT NULL,
    saved_path TEXT NOT NULL,
    sha1 TEXT NOT NULL CHECK (length(sha1) = 40),
    saved_timestamp TEXT NOT NULL,
    UNIQUE (src_path, sha1)
)
"""


def _q(name: str) -> str:
    return '"' + name + '"'


def _content_ddl(table: str) -> list[str]:
    cols = []
    for col in TABLE_COLUMNS[table]:
        if col == "source_id":
            cols.append("source_id INTEGER NOT NULL REFERENCES ACQUIRED_FILE(id)")
        else:
            cols.append(f"{_q(col)} TEXT NOT NULL DEFAULT ''")
    if table == "TIMELINE":
        cols.append("client_only INTEGER NOT NULL DEFAULT 0")
    stmts = [f"CREATE TABLE IF NOT EXISTS {table} (\n    " + ",\n    ".join(cols) + "\n)"]
    # Idempotent insert: one row per (source file, logical record).
    key = ", ".join(_q(c) for c in TABLE_COLUMNS[table])
    stmts.append(f"CREATE UNIQUE INDEX IF NOT EXISTS ux_{table.lower()} ON {table} ({key})")
    return stmts


@dataclass(frozen=True)
class RawArtifact:
    id: int
    operation: Operation
    src_path: str
    desc: str
    saved_path: str
    sha1: str
    saved_timestamp: str

    @classmethod
    def from_row(cls, row: sqlite3.Row) -> "RawArtifact":
        return cls(
            id=row["id"],
            operation=Operation(row["operation"]),
            src_path=row["src_path"],
            desc=row["desc"],
            saved_path=row["saved_path"],
            sha1=row["sha1"],
            saved_timestamp=row["saved_timestamp"],
        )


@dataclass(frozen=True)
class IntegrityViolation:
    artifact_id: int
    kind: str  # "missing" or "mismatch"
    saved_path: str
    expected_sha1: str
    actual_sha1: str | None = None


def sha1_hex(data: bytes) -> str:
    return hashlib.sha1(data).hexdigest()


def _sha1_file(path: Path) -> str:
    h = hashlib.sha1()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%d %H:%M:%S")


class CaseDatabase:
    """Handle on an opened case directory.

    All writes go through one lock so acquirers and parsers running on worker
    threads can submit artifacts and records safely. Reads share the same
    connection.
    """

    def __init__(self, base_dir: Path, conn: sqlite3.Connection,
                 max_artifact_size: int = DEFAULT_MAX_ARTIFACT_SIZE):
        self.base_dir = base_dir
        self.evidence_dir = base_dir / "evidence"
        self.db_path = base_dir / "case.db"
        self.max_artifact_size = max_artifact_size
        self._conn = conn
        self._lock = threading.RLock()

    # -- lifecycle -----------------------------------------------------
    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def __enter__(self) -> "CaseDatabase":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- queries -------------------------------------------------------
    def execute(self, sql: str, params: Iterable = ()) -> list[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(sql, tuple(params)).fetchall()

    def row_counts(self) -> dict[str, int]:
        return {t: self.execute(f"SELECT COUNT(*) FROM {t}")[0][0] for t in ALL_TABLES}

    def artifacts(self) -> list[RawArtifact]:
        return [RawArtifact.from_row(r) for r in self.execute("SELECT * FROM ACQUIRED_FILE ORDER BY id")]

    def artifact(self, artifact_id: int) -> RawArtifact:
        rows = self.execute("SELECT * FROM ACQUIRED_FILE WHERE id = ?", (artifact_id,))
        if not rows:
            raise KeyError(artifact_id)
        return RawArtifact.from_row(rows[0])

    def artifact_path(self, artifact: RawArtifact) -> Path:
        return self.base_dir / artifact.saved_path

    def read_artifact(self, artifact: RawArtifact) -> bytes:
        data = self.artifact_path(artifact).read_bytes()
        if sha1_hex(data) != artifact.sha1:
            raise IntegrityError(f"evidence file for artifact {artifact.id} does not match its sha1")
        return data

    def rows(self, table: str, source_id: int | None = None) -> list[dict]:
        if table not in ALL_TABLES:
            raise KeyError(table)
        sql = f"SELECT rowid AS _rowid, * FROM {table}"
        params: tuple = ()
        if source_id is not None:
            sql += " WHERE source_id = ?"
            params = (source_id,)
        sql += " ORDER BY rowid"
        out = []
        for r in self.execute(sql, params):
            d = dict(r)
            d.pop("_rowid")
            out.append(d)
        return out

    def timeline(self) -> list[dict]:
        cols = ", ".join(_q(c) for c in TABLE_COLUMNS["TIMELINE"])
        rows = self.execute(
            f"SELECT {cols}, client_only FROM TIMELINE ORDER BY date, time, source_id, rowid")
        return [dict(r) for r in rows]

    def dump(self) -> dict[str, list[tuple]]:
        """Every table's rows as sorted tuples, for diffing two states of a case."""
        out = {}
        for table in ALL_TABLES:
            rows = self.execute(f"SELECT * FROM {table}")
            out[table] = sorted(tuple(r) for r in rows)
        return out

    # -- writes --------------------------------------------------------
    def store_raw_artifact(self, operation: Operation | str, src_path: str, desc: str,
                           content: bytes, extension: str) -> RawArtifact:
        """Preserve ``content`` in the evidence library and register it.

        Storing the same (src_path, content) pair again returns the existing row.
        """
        operation = Operation(operation)
        if len(content) > self.max_artifact_size:
            raise ValueError(f"artifact of {len(content)} bytes exceeds limit {self.max_artifact_size}")
        digest = sha1_hex(content)
        extension = extension.lstrip(".")
        with self._lock:
            existing = self._conn.execute(
                "SELECT * FROM ACQUIRED_FILE WHERE src_path = ? AND sha1 = ?", (src_path, digest)).fetchone()
            if existing is not None:
                return RawArtifact.from_row(existing)

            name = sha1_hex(src_path.encode("utf-8"))
            target = self.evidence_dir / f"{name}.{extension}"
            if target.exists():
                # Same origin, new content: never overwrite preserved evidence.
                name = sha1_hex(f"{src_path}\0{digest}".encode("utf-8"))
                target = self.evidence_dir / f"{name}.{extension}"
            tmp = target.with_name(target.name + ".part")
            try:
                with open(tmp, "wb") as fh:
                    fh.write(content)
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, target)
            except OSError:
                tmp.unlink(missing_ok=True)
                raise
            if _sha1_file(target) != digest:
                raise IntegrityError(f"read-back verification failed for {target}")

            saved_path = target.relative_to(self.base_dir).as_posix()
            cur = self._conn.execute(
                "INSERT INTO ACQUIRED_FILE (operation, src_path, \"desc\", saved_path, sha1, saved_timestamp)"
                " VALUES (?, ?, ?, ?, ?, ?)",
                (operation.value, src_path, desc, saved_path, digest, _utc_now()))
            self._conn.commit()
            row = self._conn.execute("SELECT * FROM ACQUIRED_FILE WHERE id = ?", (cur.lastrowid,)).fetchone()
        log.debug("stored %s as %s", src_path, saved_path)
        return RawArtifact.from_row(row)

    def insert_rows(self, table: str, rows: Iterable[Mapping[str, object]]) -> int:
        """Insert content rows, ignoring exact duplicates. Returns rows actually added."""
        columns = TABLE_COLUMNS[table]
        sql = (f"INSERT OR IGNORE INTO {table} ({', '.join(_q(c) for c in columns)}) "
               f"VALUES ({', '.join('?' for _ in columns)})")
        added = 0
        with self._lock:
            for row in rows:
                values = []
                for col in columns:
                    v = row.get(col, "")
                    if col != "source_id":
                        v = "" if v is None else str(v)
                    values.append(v)
                added += self._conn.execute(sql, values).rowcount
            self._conn.commit()
        return added

    def set_client_only(self, flags: Iterable[tuple[int, bool]]) -> None:
        with self._lock:
            self._conn.execute("UPDATE TIMELINE SET client_only = 0")
            self._conn.executemany(
                "UPDATE TIMELINE SET client_only = ? WHERE rowid = ?",
                [(int(flag), rowid) for rowid, flag in flags])
            self._conn.commit()

    def timeline_with_rowid(self) -> Iterator[sqlite3.Row]:
        return iter(self.execute("SELECT rowid AS _rowid, * FROM TIMELINE ORDER BY rowid"))


def _create_schema(conn: sqlite3.Connection) -> None:
    conn.execute("CREATE TABLE IF NOT EXISTS CASE_META (key TEXT PRIMARY KEY, value TEXT NOT NULL)")
    conn.execute(_ACQUIRED_FILE_DDL)
    for table in CONTENT_TABLES:
        for stmt in _content_ddl(table):
            conn.execute(stmt)
    conn.execute("INSERT OR IGNORE INTO CASE_META (key, value) VALUES ('schema_version', ?)",
                 (str(SCHEMA_VERSION),))
    conn.commit()


def init_case(base_dir: str | os.PathLike, max_artifact_size: int = DEFAULT_MAX_ARTIFACT_SIZE) -> CaseDatabase:
    """Create or reopen a case directory."""
    base = Path(base_dir).expanduser()
    try:
        (base / "evidence").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create case directory {base}: {exc}") from exc
    if not os.access(base, os.W_OK) or not os.access(base / "evidence", os.W_OK):
        raise ConfigurationError(f"case directory {base} is not writable")

    db_path = base / "case.db"
    existed = db_path.exists()
    try:
        conn = sqlite3.connect(db_path, check_same_thread=False)
    except sqlite3.Error as exc:
        raise ConfigurationError(f"cannot open {db_path}: {exc}") from exc
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA foreign_keys = ON")

    if existed:
        try:
            has_meta = conn.execute(
                "SELECT 1 FROM sqlite_master WHERE type='table' AND name='CASE_META'").fetchone()
        except sqlite3.DatabaseError as exc:
            conn.close()
            raise SchemaVersionError(f"{db_path} is not a case database: {exc}") from exc
        tables = conn.execute("SELECT COUNT(*) FROM sqlite_master").fetchone()[0]
        if has_meta:
            row = conn.execute("SELECT value FROM CASE_META WHERE key='schema_version'").fetchone()
            version = int(row[0]) if row else None
            if version != SCHEMA_VERSION:
                conn.close()
                raise SchemaVersionError(
                    f"{db_path} has schema version {version}; this build supports {SCHEMA_VERSION}")
        elif tables:
            conn.close()
            raise SchemaVersionError(f"{db_path} has an unknown schema (no version metadata)")
    try:
        _create_schema(conn)
    except sqlite3.OperationalError as exc:
        conn.close()
        raise ConfigurationError(f"cannot write {db_path}: {exc}") from exc
    return CaseDatabase(base, conn, max_artifact_size)


def verify_evidence(case: CaseDatabase) -> list[IntegrityViolation]:
    """Recompute the digest of every preserved file."""
    violations = []
    for art in case.artifacts():
        path = case.artifact_path(art)
        if not path.is_file():
            violations.append(IntegrityViolation(art.id, "missing", art.saved_path, art.sha1))
            continue
        actual = _sha1_file(path)
        if actual != art.sha1:
            violations.append(IntegrityViolation(art.id, "mismatch", art.saved_path, art.sha1, actual))
    return violations
