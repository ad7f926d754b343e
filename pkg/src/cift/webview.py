"""Android WebView cache files.

A cache file is framed by an 8-byte header magic and an 8-byte footer magic.
After the header comes a 4-byte URL length, the URL, then the payload (for
Alexa responses, gzip-compressed JSON). Profiles describe the framing so
that the synthetic test layout and the Chromium simple-cache layout share
one parser entry point.
"""

from __future__ import annotations

import enum
import gzip
import logging
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .catalog import is_alexa_url
from .errors import FormatError, TruncatedError, UnrecognizedFormatError

log = logging.getLogger(__name__)

GZIP_MAGIC = b"\x1f\x8b"
DEFAULT_MAX_FILE_SIZE = 64 * 1024 * 1024


class Endianness(str, enum.Enum):
    LITTLE = "LITTLE"
    BIG = "BIG"


class Layout(str, enum.Enum):
    FRAMED = "FRAMED"          # header, [fields], url_len, url, payload, footer
    SIMPLE_ENTRY = "SIMPLE_ENTRY"  # Chromium simple cache: streams located from trailing EOF records


@dataclass(frozen=True)
class CacheProfile:
    name: str
    header_magic: bytes
    footer_magic: bytes
    url_length_width: int = 4
    url_length_endianness: Endianness = Endianness.LITTLE
    # (name, width) pairs between the header magic and the URL length, and
    # between the URL length and the URL itself
    layout: tuple[tuple[str, int], ...] = ()
    post_length_layout: tuple[tuple[str, int], ...] = ()
    kind: Layout = Layout.FRAMED

    def __post_init__(self):
        if len(self.header_magic) != 8 or len(self.footer_magic) != 8:
            raise ValueError("header and footer magic must be 8 bytes")
        if self.url_length_width != 4:
            raise ValueError("URL length field must be 4 bytes")

    @property
    def header_size(self) -> int:
        return 8 + sum(w for _, w in self.layout) + 4 + sum(w for _, w in self.post_length_layout)

    @property
    def min_size(self) -> int:
        if self.kind is Layout.SIMPLE_ENTRY:
            return self.header_size + 2 * _EOF.size
        return self.header_size + 8

    @property
    def _fmt(self) -> str:
        return "<I" if self.url_length_endianness is Endianness.LITTLE else ">I"


# Synthetic layout used by the test writer; the magic values are invented and
# do not correspond to any real device.
PAPER_SIMPLE = CacheProfile("PAPER_SIMPLE", b"CIFTWVC\0", b"\0CVWTFIC")

# Chromium simple-cache entry file (``<hash>_0``): SimpleFileHeader is
# {u64 magic, u32 version, u32 key_length, u32 key_hash, u32 pad}; each stream
# is followed by a SimpleFileEOF {u64 magic, u32 flags, u32 crc, u32 size, u32 pad}.
_SIMPLE_INITIAL_MAGIC = 0xFCFB6D1BA7725C30
_SIMPLE_FINAL_MAGIC = 0xF4FA6F45970D41D8
CHROMIUM_SIMPLE = CacheProfile(
    "CHROMIUM_SIMPLE",
    header_magic=struct.pack("<Q", _SIMPLE_INITIAL_MAGIC),
    footer_magic=struct.pack("<Q", _SIMPLE_FINAL_MAGIC),
    layout=(("version", 4),),
    post_length_layout=(("key_hash", 4), ("padding", 4)),
    kind=Layout.SIMPLE_ENTRY,
)
_EOF = struct.Struct("<QIIII")
_EOF_HAS_CRC = 1
_EOF_HAS_SHA256 = 2
_SIMPLE_VERSION = 5

DEFAULT_PROFILES: tuple[CacheProfile, ...] = (PAPER_SIMPLE,)
ALL_PROFILES: tuple[CacheProfile, ...] = (PAPER_SIMPLE, CHROMIUM_SIMPLE)


@dataclass
class CacheEntry:
    original_url: str
    payload: bytes
    decoded_payload: bytes
    source_file: str
    profile: str
    corrupt: bool = False
    diagnostics: list[str] = field(default_factory=list)
    headers: bytes = b""  # stream 0 of simple-cache entries (HTTP response info)


def inflate(payload: bytes) -> tuple[bytes, str | None]:
    """Inflate gzip payloads; return (decoded, error)."""
    if not payload.startswith(GZIP_MAGIC):
        return payload, None
    try:
        return gzip.decompress(payload), None
    except (OSError, EOFError, zlib.error) as exc:
        return payload, f"gzip inflation failed: {exc}"


def url_from_key(key: str) -> str:
    # newer Chromium keys carry partition prefixes ("1/0/_dk_site https://...")
    return key.rsplit(" ", 1)[-1] if " " in key else key


# -- writer -----------------------------------------------------------------

def write_cache_bytes(url: str, payload: bytes, profile: CacheProfile = PAPER_SIMPLE,
                      compress: bool = False, headers: bytes = b"") -> bytes:
    """Serialize one cache entry; ``compress`` gzips the payload first."""
    body = gzip.compress(payload, mtime=0) if compress else payload
    raw_url = url.encode("utf-8")
    if profile.kind is Layout.SIMPLE_ENTRY:
        out = [profile.header_magic, struct.pack("<IIII", _SIMPLE_VERSION, len(raw_url), zlib.crc32(raw_url), 0),
               raw_url, body, _EOF.pack(_SIMPLE_FINAL_MAGIC, _EOF_HAS_CRC, zlib.crc32(body), len(body), 0),
               headers, _EOF.pack(_SIMPLE_FINAL_MAGIC, _EOF_HAS_CRC, zlib.crc32(headers), len(headers), 0)]
        return b"".join(out)
    fields = b"".join(b"\0" * w for _, w in profile.layout)
    post = b"".join(b"\0" * w for _, w in profile.post_length_layout)
    return b"".join([profile.header_magic, fields, struct.pack(profile._fmt, len(raw_url)), post,
                     raw_url, body, profile.footer_magic])


def write_cache_file(path: str | os.PathLike, url: str, payload: bytes,
                     profile: CacheProfile = PAPER_SIMPLE, compress: bool = False) -> Path:
    path = Path(path)
    path.write_bytes(write_cache_bytes(url, payload, profile, compress))
    return path


# -- parser -----------------------------------------------------------------

def detect_profile(data: bytes, profiles: Sequence[CacheProfile] = ALL_PROFILES) -> CacheProfile:
    for p in profiles:
        if data[:8] == p.header_magic:
            return p
    raise UnrecognizedFormatError(f"unknown cache header magic {data[:8].hex()}")


def parse_cache_bytes(data: bytes, profiles: Sequence[CacheProfile] = ALL_PROFILES,
                      source_file: str = "") -> CacheEntry:
    profile = detect_profile(data, profiles)
    if len(data) < profile.min_size:
        raise TruncatedError(f"{len(data)} bytes is shorter than the {profile.name} minimum of {profile.min_size}")
    if profile.kind is Layout.SIMPLE_ENTRY:
        return _parse_simple(data, profile, source_file)

    pos = 8 + sum(w for _, w in profile.layout)
    (url_len,) = struct.unpack_from(profile._fmt, data, pos)
    pos += 4 + sum(w for _, w in profile.post_length_layout)
    if url_len > len(data) - pos:
        raise TruncatedError(f"declared URL length {url_len} exceeds file size {len(data)}")
    url = data[pos:pos + url_len].decode("utf-8", errors="replace")
    pos += url_len
    diagnostics = []
    corrupt = False
    if len(data) - pos >= 8 and data[-8:] == profile.footer_magic:
        payload = data[pos:-8]
    else:
        payload = data[pos:]
        corrupt = True
        diagnostics.append("footer magic mismatch")
    decoded, err = inflate(payload)
    if err:
        corrupt = True
        diagnostics.append(err)
    return CacheEntry(url, payload, decoded, source_file, profile.name, corrupt, diagnostics)


def _read_eof(data: bytes, end: int) -> tuple[int, int, int]:
    if end < _EOF.size:
        raise TruncatedError("no room for stream EOF record")
    magic, flags, crc, size, _ = _EOF.unpack_from(data, end - _EOF.size)
    if magic != _SIMPLE_FINAL_MAGIC:
        raise FormatError(f"bad simple-cache EOF magic at offset {end - _EOF.size}")
    return flags, crc, size


def _parse_simple(data: bytes, profile: CacheProfile, source_file: str) -> CacheEntry:
    _, version, key_len, _, _ = struct.unpack_from("<QIIII", data, 0)
    pos = profile.header_size
    if key_len > len(data) - pos:
        raise TruncatedError(f"declared key length {key_len} exceeds file size {len(data)}")
    key = data[pos:pos + key_len].decode("utf-8", errors="replace")
    body_start = pos + key_len
    diagnostics = []
    corrupt = False

    flags0, crc0, size0 = _read_eof(data, len(data))
    end0 = len(data) - _EOF.size - (32 if flags0 & _EOF_HAS_SHA256 else 0)
    start0 = end0 - size0
    if start0 < body_start + _EOF.size:
        raise TruncatedError("stream 0 extends past the entry header")
    headers = data[start0:end0]
    flags1, crc1, size1 = _read_eof(data, start0)
    end1 = start0 - _EOF.size
    start1 = end1 - size1
    if start1 != body_start:
        corrupt = True
        diagnostics.append("stream 1 size does not match its extent")
        start1 = max(body_start, min(start1, end1))
    payload = data[start1:end1]
    for flags, crc, stream, label in ((flags1, crc1, payload, "stream 1"), (flags0, crc0, headers, "stream 0")):
        if flags & _EOF_HAS_CRC and zlib.crc32(stream) != crc:
            corrupt = True
            diagnostics.append(f"{label} CRC mismatch")
    decoded, err = inflate(payload)
    if err:
        corrupt = True
        diagnostics.append(err)
    if version != _SIMPLE_VERSION:
        diagnostics.append(f"simple-cache version {version}")
    return CacheEntry(url_from_key(key), payload, decoded, source_file, profile.name, corrupt,
                      diagnostics, headers)


def parse_cache_file(path: str | os.PathLike, profiles: Sequence[CacheProfile] = ALL_PROFILES,
                     max_size: int = DEFAULT_MAX_FILE_SIZE) -> CacheEntry:
    path = Path(path)
    size = path.stat().st_size
    if size > max_size:
        raise FormatError(f"{path.name}: {size} bytes exceeds the {max_size}-byte cap")
    return parse_cache_bytes(path.read_bytes(), profiles, str(path))


class ScanResult(list):
    """Matched entries, plus per-file diagnostics for files that failed to parse."""

    def __init__(self, entries: Iterable[CacheEntry] = ()):
        super().__init__(entries)
        self.failures: list[tuple[str, str]] = []
        self.unmatched = 0

    @property
    def failed(self) -> int:
        return len(self.failures)


def _predicate(url_filter: Callable[[str], bool] | str | None) -> Callable[[str], bool]:
    if url_filter is None:
        return is_alexa_url
    if isinstance(url_filter, str):
        return lambda url: url_filter in url
    return url_filter


def scan_cache_dir(directory: str | os.PathLike, url_filter: Callable[[str], bool] | str | None = None,
                   profiles: Sequence[CacheProfile] = DEFAULT_PROFILES) -> ScanResult:
    """Parse every regular file under ``directory`` and keep the matching entries."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(directory)
    keep = _predicate(url_filter)
    result = ScanResult()
    for path in sorted(p for p in directory.rglob("*") if p.is_file() and not p.is_symlink()):
        try:
            entry = parse_cache_file(path, profiles)
        except (FormatError, OSError) as exc:
            result.failures.append((str(path), str(exc)))
            log.info("%s: %s", path, exc)
            continue
        if keep(entry.original_url):
            result.append(entry)
        else:
            result.unmatched += 1
    return result
