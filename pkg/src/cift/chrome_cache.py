"""Chrome block-file disk cache (the ``index`` + ``data_#`` + ``f_######`` family).

Entries are reached from the index hash table through packed 32-bit cache
addresses. Each entry record holds the key (URL) and up to four stream
addresses; stream 0 is the serialized HTTP response info and stream 1 the
body as received from the server.
"""

from __future__ import annotations

import enum
import gzip
import logging
import os
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .catalog import is_alexa_url
from .errors import FormatError, TruncatedError, UnrecognizedFormatError, UnsupportedVersionError
from .webview import url_from_key

log = logging.getLogger(__name__)

INDEX_MAGIC = 0xC103CAC3
BLOCK_MAGIC = 0xC104CAC3
SUPPORTED_VERSIONS = (0x20000, 0x20001, 0x30000)
DEFAULT_TABLE_LEN = 0x10000
DEFAULT_STREAM_CAP = 64 * 1024 * 1024

INDEX_HEADER = struct.Struct("<IIiiiiIiiiQq200x")
LRU_SIZE = 112
TABLE_OFFSET = INDEX_HEADER.size + LRU_SIZE
BLOCK_HEADER = struct.Struct("<IIhhiii4i4ii5i")
BLOCK_HEADER_SIZE = 8192
ENTRY_STORE = struct.Struct("<IIIiiiQiI4i4II4iI")
ENTRY_BLOCK = 256
RANKINGS = struct.Struct("<QQIIIiI")

# Windows FILETIME epoch (1601) to Unix epoch, in microseconds
_WIN_EPOCH_DELTA_US = 11_644_473_600_000_000


class StorageKind(enum.IntEnum):
    SEPARATE_FILE = 0
    RANKINGS = 1
    BLOCK_256 = 2
    BLOCK_1024 = 3
    BLOCK_4096 = 4


BLOCK_SIZES = {
    StorageKind.RANKINGS: 36,
    StorageKind.BLOCK_256: 256,
    StorageKind.BLOCK_1024: 1024,
    StorageKind.BLOCK_4096: 4096,
}


@dataclass(frozen=True)
class CacheAddress:
    raw: int

    @property
    def initialized(self) -> bool:
        return bool(self.raw & 0x80000000)

    @property
    def storage_kind(self) -> StorageKind | None:
        kind = (self.raw >> 28) & 0x7
        return StorageKind(kind) if kind <= 4 else None

    @property
    def file_number(self) -> int:
        if self.storage_kind is StorageKind.SEPARATE_FILE:
            return self.raw & 0x0FFFFFFF
        return (self.raw >> 16) & 0xFF

    @property
    def start_block(self) -> int:
        return 0 if self.storage_kind is StorageKind.SEPARATE_FILE else self.raw & 0xFFFF

    @property
    def block_count(self) -> int:
        return 0 if self.storage_kind is StorageKind.SEPARATE_FILE else ((self.raw >> 24) & 0x3) + 1

    @property
    def block_size(self) -> int:
        return BLOCK_SIZES.get(self.storage_kind, 0)

    @property
    def file_name(self) -> str:
        if self.storage_kind is StorageKind.SEPARATE_FILE:
            return f"f_{self.file_number:06x}"
        return f"data_{self.file_number}"

    @classmethod
    def decode(cls, raw: int) -> "CacheAddress":
        return cls(raw & 0xFFFFFFFF)

    @classmethod
    def encode(cls, kind: StorageKind, file_number: int, start_block: int = 0,
               block_count: int = 1) -> "CacheAddress":
        kind = StorageKind(kind)
        if kind is StorageKind.SEPARATE_FILE:
            if not 0 <= file_number <= 0x0FFFFFFF:
                raise ValueError("separate file number out of range")
            return cls(0x80000000 | file_number)
        if not (0 <= file_number <= 0xFF and 0 <= start_block <= 0xFFFF and 1 <= block_count <= 4):
            raise ValueError("block address field out of range")
        return cls(0x80000000 | (kind << 28) | ((block_count - 1) << 24) | (file_number << 16) | start_block)

    def __str__(self) -> str:
        if not self.initialized:
            return "0x%08x (uninitialized)" % self.raw
        if self.storage_kind is StorageKind.SEPARATE_FILE:
            return "0x%08x (%s)" % (self.raw, self.file_name)
        return "0x%08x (%s block %d x%d)" % (self.raw, self.file_name, self.start_block, self.block_count)


@dataclass
class ChromeEntry:
    key: str
    header_stream: bytes
    body_stream: bytes
    decoded_body: bytes
    http_headers: dict[str, str]
    source_addresses: list[CacheAddress]
    status_line: str = ""
    creation_time_ms: int | None = None
    corrupt: bool = False
    diagnostics: list[str] = field(default_factory=list)

    @property
    def url(self) -> str:
        return url_from_key(self.key)

    def header(self, name: str, default: str = "") -> str:
        name = name.lower()
        for k, v in self.http_headers.items():
            if k.lower() == name:
                return v
        return default


def parse_http_headers(stream: bytes) -> tuple[str, dict[str, str]]:
    """Pull the NUL-separated raw header block out of a serialized response info."""
    start = stream.find(b"HTTP/1.")
    if start < 0:
        return "", {}
    end = stream.find(b"\0\0", start)
    block = stream[start:end if end >= 0 else len(stream)]
    lines = block.decode("latin-1").split("\0")
    headers: dict[str, str] = {}
    for line in lines[1:]:
        name, sep, value = line.partition(":")
        if sep:
            headers[name.strip()] = value.strip()
    return lines[0], headers


class CacheHandle:
    """An opened cache directory. Read-only; block files are loaded on demand."""

    def __init__(self, directory: Path, version: int, table: list[CacheAddress], num_entries: int,
                 stream_cap: int = DEFAULT_STREAM_CAP):
        self.directory = directory
        self.version = version
        self.table = table
        self.num_entries = num_entries
        self.stream_cap = stream_cap
        self.diagnostics: list[str] = []
        self._files: dict[str, bytes | None] = {}

    def __len__(self) -> int:
        return self.num_entries

    def files(self) -> list[Path]:
        return sorted(p for p in self.directory.iterdir()
                      if p.is_file() and (p.name == "index" or re.fullmatch(r"data_\d+|f_[0-9a-f]{6}", p.name)))

    def _file(self, name: str) -> bytes | None:
        if name not in self._files:
            path = self.directory / name
            try:
                data = path.read_bytes()
            except OSError:
                data = None
            if data is not None and name.startswith("data_"):
                if len(data) < BLOCK_HEADER_SIZE or struct.unpack_from("<I", data)[0] != BLOCK_MAGIC:
                    self.diagnostics.append(f"{name}: not a block file")
                    data = None
            self._files[name] = data
        return self._files[name]

    def read_address(self, addr: CacheAddress, size: int | None = None) -> tuple[bytes, bool]:
        """Bytes at ``addr``; ``size`` limits the read. Returns (data, complete)."""
        if not addr.initialized or addr.storage_kind in (None, StorageKind.RANKINGS):
            raise FormatError(f"cannot read address {addr}")
        data = self._file(addr.file_name)
        if data is None:
            raise FormatError(f"address {addr} points at missing file {addr.file_name}")
        if addr.storage_kind is StorageKind.SEPARATE_FILE:
            want = len(data) if size is None else size
            return data[:want], len(data) >= want
        start = BLOCK_HEADER_SIZE + addr.start_block * addr.block_size
        extent = addr.block_count * addr.block_size
        if start >= len(data):
            raise FormatError(f"address {addr} lies beyond the end of {addr.file_name}")
        want = extent if size is None else size
        chunk = data[start:start + min(want, extent)]
        return chunk, len(chunk) >= want


def open_cache(directory: str | os.PathLike, stream_cap: int = DEFAULT_STREAM_CAP) -> CacheHandle:
    directory = Path(directory)
    index = directory / "index"
    if not index.is_file():
        raise UnrecognizedFormatError(f"{directory}: no index file")
    data = index.read_bytes()
    if len(data) < 8 or struct.unpack_from("<I", data)[0] != INDEX_MAGIC:
        raise UnrecognizedFormatError(f"{index}: bad index magic")
    version = struct.unpack_from("<I", data, 4)[0]
    if version not in SUPPORTED_VERSIONS:
        raise UnsupportedVersionError(version, f"unsupported cache index version 0x{version:x}")
    if len(data) < TABLE_OFFSET:
        raise TruncatedError(f"{index}: header truncated")
    if not any(re.fullmatch(r"data_\d+", p.name) for p in directory.iterdir()):
        raise UnrecognizedFormatError(f"{directory}: no data_# block files")
    fields = INDEX_HEADER.unpack_from(data)
    num_entries, table_len = fields[2], fields[7] or DEFAULT_TABLE_LEN
    available = (len(data) - TABLE_OFFSET) // 4
    handle_diag = []
    if table_len > available:
        handle_diag.append(f"index table declares {table_len} slots, file holds {available}")
        table_len = available
    raw = struct.unpack_from(f"<{table_len}I", data, TABLE_OFFSET)
    table = [CacheAddress(r) for r in raw if r]
    handle = CacheHandle(directory, version, table, max(num_entries, 0), stream_cap)
    handle.diagnostics.extend(handle_diag)
    return handle


def _read_stream(handle: CacheHandle, addr: CacheAddress, size: int, label: str,
                 diag: list[str]) -> tuple[bytes, bool]:
    if size <= 0 or not addr.initialized:
        return b"", False
    if size > handle.stream_cap:
        diag.append(f"{label}: declared size {size} exceeds cap {handle.stream_cap}")
        size = handle.stream_cap
        bad = True
    else:
        bad = False
    try:
        data, complete = handle.read_address(addr, size)
    except FormatError as exc:
        diag.append(f"{label}: {exc}")
        return b"", True
    if not complete:
        diag.append(f"{label}: {size} bytes declared, {len(data)} available at {addr}")
    return data, bad or not complete


def _read_entry(handle: CacheHandle, addr: CacheAddress) -> tuple[ChromeEntry, CacheAddress]:
    if addr.storage_kind is not StorageKind.BLOCK_256:
        raise FormatError(f"entry address {addr} is not in a 256-byte block file")
    block, complete = handle.read_address(addr)
    if len(block) < ENTRY_STORE.size:
        raise FormatError(f"entry at {addr} is truncated")
    f = ENTRY_STORE.unpack_from(block)
    next_addr = CacheAddress(f[1])
    creation, key_len, long_key = f[6], f[7], CacheAddress(f[8])
    sizes, addrs = f[9:13], [CacheAddress(a) for a in f[13:17]]
    diag: list[str] = []
    corrupt = False
    if key_len < 0 or key_len > handle.stream_cap:
        raise FormatError(f"entry at {addr} has key length {key_len}")
    if long_key.initialized:
        try:
            raw_key, ok = handle.read_address(long_key, key_len)
        except FormatError as exc:
            raise FormatError(f"entry at {addr}: long key unreadable: {exc}") from exc
    else:
        raw_key = block[ENTRY_STORE.size:ENTRY_STORE.size + key_len]
        ok = len(raw_key) == key_len
    if not ok:
        diag.append("key truncated")
        corrupt = True
    key = raw_key.split(b"\0", 1)[0].decode("utf-8", errors="replace")

    header_stream, bad0 = _read_stream(handle, addrs[0], sizes[0], "stream 0", diag)
    body_stream, bad1 = _read_stream(handle, addrs[1], sizes[1], "stream 1", diag)
    corrupt = corrupt or bad0 or bad1
    status, headers = parse_http_headers(header_stream)
    decoded = body_stream
    encoding = next((v for k, v in headers.items() if k.lower() == "content-encoding"), "").lower()
    if encoding == "gzip" and body_stream:
        try:
            decoded = gzip.decompress(body_stream)
        except (OSError, EOFError, zlib.error) as exc:
            diag.append(f"gzip inflation failed: {exc}")
            corrupt = True
    created = (creation - _WIN_EPOCH_DELTA_US) // 1000 if creation > _WIN_EPOCH_DELTA_US else None
    entry = ChromeEntry(key, header_stream, body_stream, decoded, headers,
                        [addr] + [a for a in addrs[:2] if a.initialized] + ([long_key] if long_key.initialized else []),
                        status, created, corrupt, diag)
    return entry, next_addr


def iter_entries(handle: CacheHandle):
    """Every entry reachable from the index table, following collision chains."""
    visited: set[int] = set()
    for head in handle.table:
        addr = head
        while addr.initialized and addr.raw not in visited:
            visited.add(addr.raw)
            try:
                entry, addr = _read_entry(handle, addr)
            except FormatError as exc:
                handle.diagnostics.append(f"skipped entry: {exc}")
                break
            for d in entry.diagnostics:
                handle.diagnostics.append(f"{entry.key}: {d}")
            yield entry


def read_entries(handle: CacheHandle, url_filter: Callable[[str], bool] | str | None = None) -> list[ChromeEntry]:
    if url_filter is None:
        keep = is_alexa_url
    elif isinstance(url_filter, str):
        keep = lambda url: url_filter in url  # noqa: E731
    else:
        keep = url_filter
    return [e for e in iter_entries(handle) if keep(e.url)]
