"""Cloud acquisition: authenticated session, catalog walk, pagination, audio download.

Every response body is preserved in the evidence library before it is parsed.
Only GET requests are issued once the session exists.
"""

from __future__ import annotations

import enum
import http.cookiejar
import ipaddress
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable
from urllib.parse import urlsplit

import requests

from . import catalog as _catalog
from .catalog import ApiDescriptor, Pagination
from .errors import (AuthenticationError, ConfigurationError, HttpStatusError, ParameterError,
                     PayloadError, TransportError)
from .normalize import NormalizeResult, Normalizer, audio_id_from, correlate, decode_payload, write_result
from .store import CaseDatabase, Operation, RawArtifact

log = logging.getLogger(__name__)

DEFAULT_USER_AGENT = "cift/0.1 (forensic acquisition; read-only)"
DEFAULT_PAGE_SIZE = 50
DEFAULT_LIST_SIZE = 100
DEFAULT_WORKERS = 4
_MAX_PAGES = 100_000

_AUDIO_EXT = {
    "audio/wav": "wav", "audio/x-wav": "wav", "audio/wave": "wav",
    "audio/mpeg": "mp3", "audio/mp3": "mp3", "audio/ogg": "ogg", "audio/opus": "opus",
    "audio/mp4": "m4a", "audio/aac": "aac", "audio/flac": "flac",
}


class Outcome(str, enum.Enum):
    OK = "OK"
    AUTH_FAILED = "AUTH_FAILED"
    HTTP_ERROR = "HTTP_ERROR"
    PARSE_WARNING = "PARSE_WARNING"
    SKIPPED = "SKIPPED"


@dataclass
class DescriptorOutcome:
    status: Outcome
    code: int | None = None
    detail: str = ""
    pages: int = 0

    def __str__(self) -> str:
        if self.status is Outcome.HTTP_ERROR:
            return f"HTTP_ERROR({self.code})"
        return self.status.value


@dataclass
class AcquisitionReport:
    outcomes: dict[str, DescriptorOutcome] = field(default_factory=dict)
    artifacts_stored: int = 0
    events: int = 0
    audio_downloaded: int = 0
    warnings: list[str] = field(default_factory=list)

    def ok(self) -> list[str]:
        return [n for n, o in self.outcomes.items() if o.status is Outcome.OK]

    def format(self) -> str:
        lines = [f"{name:<24} {outcome}" + (f"  [{outcome.pages} page(s)]" if outcome.pages > 1 else "")
                 for name, outcome in self.outcomes.items()]
        lines.append(f"artifacts stored: {self.artifacts_stored}")
        lines.append(f"timeline events: {self.events}")
        lines.append(f"audio files: {self.audio_downloaded}")
        return "\n".join(lines)


@dataclass
class Session:
    base_url: str
    http: requests.Session
    authenticated: bool = False
    customer_id: str | None = None
    skills_base_url: str = _catalog.DEFAULT_SKILLS_BASE_URL
    timeout: float = 30.0
    _email: str | None = field(default=None, repr=False)
    _password: str | None = field(default=None, repr=False)

    @property
    def cookies(self) -> requests.cookies.RequestsCookieJar:
        return self.http.cookies

    def can_relogin(self) -> bool:
        return bool(self._email and self._password)


def _check_transport(base_url: str) -> None:
    parts = urlsplit(base_url)
    if parts.scheme == "https":
        return
    if parts.scheme != "http":
        raise ConfigurationError(f"unsupported URL scheme in {base_url!r}")
    host = parts.hostname or ""
    try:
        loopback = host == "localhost" or ipaddress.ip_address(host).is_loopback
    except ValueError:
        loopback = False
    if not loopback:
        raise ConfigurationError("plain HTTP is only allowed for a loopback test service")


def _skills_base(base_url: str, skills_base_url: str | None) -> str:
    # The skills store lives on its own host in production; any other
    # deployment (a mock, a proxy) is assumed to serve it from the base URL.
    if skills_base_url:
        return skills_base_url.rstrip("/")
    if base_url.rstrip("/") == _catalog.DEFAULT_BASE_URL:
        return _catalog.DEFAULT_SKILLS_BASE_URL
    return base_url.rstrip("/")


def _new_http(user_agent: str) -> requests.Session:
    http = requests.Session()
    http.headers["User-Agent"] = user_agent
    return http


def _looks_like_login_page(resp: requests.Response) -> bool:
    path = urlsplit(resp.url).path
    return bool(resp.history) and (path.endswith("/login") or "/ap/signin" in path)


def _login(session: Session) -> None:
    try:
        resp = session.http.post(session.base_url.rstrip("/") + "/login",
                                 data={"email": session._email, "password": session._password},
                                 timeout=session.timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    if resp.status_code in (401, 403):
        raise AuthenticationError(f"login rejected (HTTP {resp.status_code})")
    if resp.status_code >= 400:
        raise AuthenticationError(f"login failed (HTTP {resp.status_code})")
    if _looks_like_login_page(resp):
        raise AuthenticationError("login redirected back to the sign-in page")


def _probe(session: Session) -> None:
    url = _catalog.resolve(_catalog.get("bootstrap"), session.base_url)
    try:
        resp = session.http.get(url, timeout=session.timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    if resp.status_code in (401, 403) or _looks_like_login_page(resp):
        session.authenticated = False
        raise AuthenticationError(f"session cookies rejected by bootstrap (HTTP {resp.status_code})")
    session.authenticated = True
    if resp.ok:
        try:
            session.customer_id = resp.json()["authentication"]["customerId"]
        except (ValueError, KeyError, TypeError):
            log.warning("bootstrap probe returned no authentication.customerId")


def create_session(base_url: str, email: str, password: str, *,
                   skills_base_url: str | None = None, user_agent: str = DEFAULT_USER_AGENT,
                   timeout: float = 30.0) -> Session:
    """Log in with a form POST and confirm the cookies against bootstrap."""
    _check_transport(base_url)
    session = Session(base_url=base_url.rstrip("/"), http=_new_http(user_agent),
                      skills_base_url=_skills_base(base_url, skills_base_url),
                      timeout=timeout, _email=email, _password=password)
    _login(session)
    _probe(session)
    return session


def session_from_cookie_file(base_url: str, cookie_file: str, *, skills_base_url: str | None = None,
                             user_agent: str = DEFAULT_USER_AGENT, timeout: float = 30.0) -> Session:
    """Reuse cookies exported from a browser (Netscape cookies.txt format)."""
    _check_transport(base_url)
    jar = http.cookiejar.MozillaCookieJar(cookie_file)
    try:
        jar.load(ignore_discard=True, ignore_expires=True)
    except (OSError, http.cookiejar.LoadError) as exc:
        raise ConfigurationError(f"cannot read cookie file {cookie_file}: {exc}") from exc
    session = Session(base_url=base_url.rstrip("/"), http=_new_http(user_agent),
                      skills_base_url=_skills_base(base_url, skills_base_url),
                      timeout=timeout)
    for cookie in jar:
        if not cookie.expires:  # exporters write 0 for session cookies
            cookie.expires, cookie.discard = None, True
        session.http.cookies.set_cookie(cookie)
    _probe(session)
    return session


def _items_of(doc, key: str) -> list:
    value = doc.get(key) if isinstance(doc, dict) else None
    return value if isinstance(value, list) else []


def _now_ms() -> int:
    return int(time.time() * 1000)


class CloudAcquirer:
    """Walks the catalog for one session and one case."""

    def __init__(self, session: Session, case: CaseDatabase, *,
                 descriptors: Iterable[ApiDescriptor] | None = None,
                 normalizer: Normalizer | None = None,
                 page_size: int = DEFAULT_PAGE_SIZE, list_size: int = DEFAULT_LIST_SIZE,
                 workers: int = DEFAULT_WORKERS, download_audio: bool = True,
                 clock: Callable[[], int] | None = None):
        if not session.authenticated:
            raise AuthenticationError("session is not authenticated")
        self.session = session
        self.case = case
        self.descriptors = list(descriptors) if descriptors is not None else _catalog.catalog()
        self.normalizer = normalizer or Normalizer()
        if session.customer_id and not self.normalizer.context.customer_id:
            self.normalizer.context.customer_id = session.customer_id
        self.page_size = page_size
        self.list_size = list_size
        self.workers = max(1, workers)
        self.download_audio = download_audio
        self.clock = clock or _now_ms
        self._auth_lock = threading.Lock()
        self._relogin_used = False
        self._auth_dead = False
        self._stored = 0
        self._stored_lock = threading.Lock()

    # -- HTTP ------------------------------------------------------------
    def _get(self, url: str, headers: dict[str, str] | None = None) -> requests.Response:
        if self._auth_dead:
            raise AuthenticationError("session expired")
        for attempt in (0, 1):
            try:
                resp = self.session.http.get(url, headers=headers or {}, timeout=self.session.timeout)
            except requests.RequestException as exc:
                raise TransportError(str(exc)) from exc
            if resp.status_code not in (401, 403) and not _looks_like_login_page(resp):
                break
            if attempt == 0 and self._relogin():
                continue
            self._auth_dead = True
            raise AuthenticationError(f"HTTP {resp.status_code} for {url}")
        if not resp.ok:
            raise HttpStatusError(resp.status_code, url)
        return resp

    def _relogin(self) -> bool:
        with self._auth_lock:
            if self._auth_dead or not self.session.can_relogin():
                return False
            if self._relogin_used:
                return True  # another worker already refreshed the cookies
            self._relogin_used = True
            try:
                _login(self.session)
            except (AuthenticationError, TransportError) as exc:
                log.error("re-login failed: %s", exc)
                return False
            log.info("session refreshed after authentication expiry")
            return True

    def _store(self, src: str, desc: str, content: bytes, ext: str) -> RawArtifact:
        art = self.case.store_raw_artifact(Operation.CLOUD, src, desc, content, ext)
        with self._stored_lock:
            self._stored += 1
        return art

    def _url(self, d: ApiDescriptor, params: dict | None = None, template: str | None = None) -> str:
        return _catalog.resolve(d, self.session.base_url, params or {}, self.session.skills_base_url, template)

    # -- fetch + preserve --------------------------------------------------
    def _fetch_simple(self, d: ApiDescriptor, params: dict | None = None) -> list[tuple[RawArtifact, bytes]]:
        out = []
        for template in (d.url_template,) + d.alternate_urls:
            url = self._url(d, params, template)
            resp = self._get(url, d.extra_headers)
            out.append((self._store(url, d.description, resp.content, "json"), resp.content))
        return out

    def _fetch_paged(self, d: ApiDescriptor, key: str, make_params: Callable[[str | int], dict],
                     first_cursor: str | int, outcome: DescriptorOutcome) -> list[tuple[RawArtifact, bytes]]:
        pages: list[tuple[RawArtifact, bytes]] = []
        cursor = first_cursor
        prev_min = None
        for _ in range(_MAX_PAGES):
            url = self._url(d, make_params(cursor))
            resp = self._get(url, d.extra_headers)
            pages.append((self._store(url, d.description, resp.content, "json"), resp.content))
            try:
                items = _items_of(decode_payload(resp.content), key)
                stamps = [int(i["creationTimestamp"]) for i in items]
            except (PayloadError, KeyError, TypeError, ValueError) as exc:
                outcome.status = Outcome.PARSE_WARNING
                outcome.detail = f"malformed page: {exc}"
                break
            if not stamps:
                break
            page_min = min(stamps)
            if page_min == prev_min:
                break
            nxt = page_min - 1
            if isinstance(cursor, int) and nxt >= cursor:
                break
            prev_min = page_min
            cursor = nxt
        outcome.pages = sum(1 for _, body in pages if _page_len(body, key))
        return pages

    def _fetch(self, d: ApiDescriptor, devices: list[dict]) -> tuple[DescriptorOutcome, list]:
        outcome = DescriptorOutcome(Outcome.OK)
        try:
            if d.pagination is Pagination.BEFORE_CREATION_TIME:
                pages = self._fetch_paged(d, "cards", lambda c: {"beforeCreationTime": c},
                                          self.clock(), outcome)
            elif d.pagination is Pagination.START_TIME_SIZE_OFFSET:
                pages = self._fetch_paged(d, "activities",
                                          lambda c: {"startTime": c, "size": self.page_size}, "", outcome)
            elif d.pagination is Pagination.SIZE_ONLY:
                pages = self._fetch_simple(d, {"size": self.list_size})
            elif d.pagination is Pagination.DEVICE_QUEUE:
                if not devices:
                    return DescriptorOutcome(Outcome.SKIPPED, detail="no Alexa devices known"), []
                pages = []
                for dev in devices:
                    params = {"deviceSerialNumber": dev.get("serialNumber", ""),
                              "deviceType": dev.get("deviceType", ""), "size": self.page_size}
                    pages += self._fetch_simple(d, params)
            else:
                pages = self._fetch_simple(d)
        except AuthenticationError as exc:
            return DescriptorOutcome(Outcome.AUTH_FAILED, detail=str(exc)), []
        except HttpStatusError as exc:
            return DescriptorOutcome(Outcome.HTTP_ERROR, code=exc.status, detail=str(exc)), []
        except TransportError as exc:
            return DescriptorOutcome(Outcome.HTTP_ERROR, detail=str(exc)), []
        if not outcome.pages:
            outcome.pages = len(pages)
        return outcome, pages

    def _normalize(self, d: ApiDescriptor, pages: list, outcome: DescriptorOutcome,
                   report: AcquisitionReport) -> NormalizeResult:
        total = NormalizeResult()
        for art, body in pages:
            try:
                res = self.normalizer.normalize(body, d, art.id, Operation.CLOUD,
                                                filename=art.saved_path, src_path=art.src_path)
            except PayloadError as exc:
                outcome.status = Outcome.PARSE_WARNING
                outcome.detail = str(exc)
                report.warnings.append(f"{d.name}: {exc}")
                continue
            write_result(self.case, res)
            total.extend(res)
        if total.warnings:
            if outcome.status is Outcome.OK:
                outcome.status = Outcome.PARSE_WARNING
            for w in total.warnings:
                report.warnings.append(f"{d.name}: {w.key_path} ({w.detail})")
        report.events += len(total.events)
        return total

    # -- public ------------------------------------------------------------
    def acquire_all(self) -> AcquisitionReport:
        report = AcquisitionReport()
        audio_ids: list[str] = []
        devices: list[dict] = []
        first = [d for name in ("bootstrap", "household", "device-preferences", "devices/device")
                 for d in self.descriptors if d.name == name]
        utterance = [d for d in self.descriptors if d.name == "utterance/audio/data"]
        rest = [d for d in self.descriptors if d not in first and d not in utterance]

        # Context-providing endpoints first, sequentially.
        for d in first:
            outcome, pages = self._fetch(d, devices)
            report.outcomes[d.name] = outcome
            self._normalize(d, pages, outcome, report)
            if d.name == "devices/device":
                for _, body in pages:
                    try:
                        devices += _items_of(decode_payload(body), "devices")
                    except PayloadError:
                        pass

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            fetched = list(pool.map(lambda d: self._fetch(d, devices), rest))
        for d, (outcome, pages) in zip(rest, fetched):
            report.outcomes[d.name] = outcome
            self._normalize(d, pages, outcome, report)
            for _, body in pages:
                audio_ids += _audio_ids(d, body)

        for d in utterance:
            report.outcomes[d.name] = self._download_all(audio_ids, report)

        order = [d.name for d in self.descriptors]
        report.outcomes = {n: report.outcomes[n] for n in order if n in report.outcomes}
        report.artifacts_stored = self._stored
        correlate(self.case)
        return report

    def _download_all(self, audio_ids: list[str], report: AcquisitionReport) -> DescriptorOutcome:
        unique = list(dict.fromkeys(a for a in audio_ids if a))
        if not self.download_audio or not unique:
            return DescriptorOutcome(Outcome.SKIPPED, detail="no audio ids" if not unique else "disabled")
        failures: list[HttpStatusError] = []
        for audio_id in unique:
            try:
                self.download_utterance(audio_id)
                report.audio_downloaded += 1
            except HttpStatusError as exc:
                failures.append(exc)
                report.warnings.append(f"utterance {audio_id}: HTTP {exc.status}")
            except AuthenticationError as exc:
                return DescriptorOutcome(Outcome.AUTH_FAILED, detail=str(exc), pages=report.audio_downloaded)
            except TransportError as exc:
                failures.append(HttpStatusError(0, str(exc)))
        if report.audio_downloaded == 0 and failures:
            return DescriptorOutcome(Outcome.HTTP_ERROR, code=failures[0].status,
                                     detail=f"{len(failures)} download(s) failed")
        detail = f"{len(failures)} missing" if failures else ""
        return DescriptorOutcome(Outcome.OK, detail=detail, pages=report.audio_downloaded)

    def paginate_cards(self) -> int:
        d = _catalog.get("cards", self.descriptors)
        outcome, pages = self._fetch(d, [])
        self._normalize(d, pages, outcome, AcquisitionReport())
        return sum(_page_len(body, "cards") for _, body in pages)

    def paginate_activities(self) -> int:
        d = _catalog.get("activities", self.descriptors)
        outcome, pages = self._fetch(d, [])
        self._normalize(d, pages, outcome, AcquisitionReport())
        return sum(_page_len(body, "activities") for _, body in pages)

    def download_utterance(self, audio_id: str) -> RawArtifact:
        audio_id = audio_id_from(audio_id)
        if not audio_id:
            raise ParameterError("audio id must not be empty")
        d = _catalog.get("utterance/audio/data", self.descriptors)
        url = self._url(d, {"id": audio_id})
        resp = self._get(url)
        ctype = resp.headers.get("Content-Type", "").split(";")[0].strip().lower()
        return self._store(url, "utterance audio", resp.content, _AUDIO_EXT.get(ctype, "wav"))


def _page_len(body: bytes, key: str) -> int:
    try:
        return len(_items_of(decode_payload(body), key))
    except PayloadError:
        return 0


def _audio_ids(d: ApiDescriptor, body: bytes) -> list[str]:
    try:
        doc = decode_payload(body)
    except PayloadError:
        return []
    if d.name == "cards":
        return [audio_id_from((c.get("playbackAudioAction") or {}).get("url")) for c in _items_of(doc, "cards")]
    if d.name == "activities":
        return [audio_id_from(a.get("utteranceId")) for a in _items_of(doc, "activities")]
    if d.name.startswith("todos"):
        return [audio_id_from(t.get("originalAudioId")) for t in _items_of(doc, "values")]
    return []


# Module-level conveniences mirroring the operation names.

def acquire_all(session: Session, case: CaseDatabase, **kwargs) -> AcquisitionReport:
    return CloudAcquirer(session, case, **kwargs).acquire_all()


def paginate_cards(session: Session, case: CaseDatabase, **kwargs) -> int:
    return CloudAcquirer(session, case, **kwargs).paginate_cards()


def paginate_activities(session: Session, case: CaseDatabase, **kwargs) -> int:
    return CloudAcquirer(session, case, **kwargs).paginate_activities()


def download_utterance(session: Session, audio_id: str, case: CaseDatabase, **kwargs) -> RawArtifact:
    return CloudAcquirer(session, case, **kwargs).download_utterance(audio_id)
