"""Exception hierarchy shared by every cift module."""


class CiftError(Exception):
    """Base class for all errors raised by cift."""


class ConfigurationError(CiftError):
    """Case directory or option problem that stops the run."""


class SchemaVersionError(CiftError):
    """Existing case database carries a schema version this build cannot open."""


class IntegrityError(CiftError):
    """Bytes read back from the evidence library do not match their digest."""


class ParameterError(CiftError, ValueError):
    """Missing or invalid parameter, e.g. an unfilled URL placeholder."""


class RangeError(CiftError, ValueError):
    """Timestamp outside the representable range."""


class PayloadError(CiftError):
    """Payload could not be decoded (not JSON, bad gzip stream)."""


class FormatError(CiftError):
    """Base class for binary-format parse failures."""


class UnrecognizedFormatError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    def __init__(self, version: int, message: str = ""):
        self.version = version
        super().__init__(message or f"unsupported format version 0x{version:x}")


class AuthenticationError(CiftError):
    """Login rejected or session no longer accepted."""


class TransportError(CiftError):
    """Network-level failure (connection refused, TLS error, timeout)."""


class HttpStatusError(CiftError):
    """Server answered with a non-success status."""

    def __init__(self, status: int, url: str):
        self.status = status
        self.url = url
        super().__init__(f"HTTP {status} for {url}")


class ExportError(CiftError):
    """Export target could not be written."""
