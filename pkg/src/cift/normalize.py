"""Turn JSON payloads into content-table rows and l2t_csv-style timeline events.

Payloads come from cloud responses or from bodies recovered out of WebView and
Chrome caches; both paths go through :class:`Normalizer` so identical logical
records produce identical rows whatever their origin.
"""

from __future__ import annotations

import datetime
import enum
import gzip
import hashlib
import json
import logging
import zlib
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple
from urllib.parse import parse_qs, urlsplit

from . import catalog as _catalog
from .catalog import ApiDescriptor, Category
from .errors import PayloadError, RangeError
from .store import CaseDatabase, Operation, RawArtifact

log = logging.getLogger(__name__)

_EPOCH = datetime.datetime(1970, 1, 1)
_MS_THRESHOLD = 10 ** 11


class EpochUnit(str, enum.Enum):
    AUTO = "AUTO"
    MILLIS = "MILLIS"
    SECONDS = "SECONDS"


class UtcStamp(NamedTuple):
    date: str  # YYYY-MM-DD
    time: str  # HH:MM:SS.mmm


def epoch_ms(value: int | float | str, unit: EpochUnit | str = EpochUnit.AUTO) -> int:
    """Normalize a UNIX timestamp (ms or s, number or numeric text) to integer milliseconds."""
    unit = EpochUnit(unit)
    if isinstance(value, bool):
        raise RangeError(f"not a timestamp: {value!r}")
    if isinstance(value, str):
        text = value.strip()
        try:
            value = int(text)
        except ValueError:
            try:
                value = float(text)
            except ValueError:
                raise RangeError(f"not a numeric timestamp: {value!r}") from None
    if value != value or value < 0:  # NaN or negative
        raise RangeError(f"timestamp out of range: {value!r}")
    if unit is EpochUnit.AUTO:
        unit = EpochUnit.MILLIS if value > _MS_THRESHOLD else EpochUnit.SECONDS
    if unit is EpochUnit.MILLIS:
        return int(round(value))
    if isinstance(value, int):
        return value * 1000
    return int(round(value * 1000))


def ms_to_datetime(ms: int) -> datetime.datetime:
    try:
        return _EPOCH + datetime.timedelta(milliseconds=ms)
    except OverflowError:
        raise RangeError(f"timestamp beyond year 9999: {ms} ms") from None


def epoch_to_utc(value: int | float | str, unit: EpochUnit | str = EpochUnit.AUTO) -> UtcStamp:
    dt = ms_to_datetime(epoch_ms(value, unit))
    return UtcStamp(dt.strftime("%Y-%m-%d"), dt.strftime("%H:%M:%S.") + f"{dt.microsecond // 1000:03d}")


def format_utc(value: int | float | str, unit: EpochUnit | str = EpochUnit.AUTO) -> str:
    """``YYYY-MM-DD HH:MM:SS.mmm`` form used by SKILL and COMPATIBLE_DEVICE columns."""
    d, t = epoch_to_utc(value, unit)
    return f"{d} {t}"


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# ---------------------------------------------------------------------------
# records

@dataclass
class NormalizedRecord:
    target_table: str
    source_id: int
    columns: dict[str, str]

    def as_row(self) -> dict[str, Any]:
        return {"source_id": self.source_id, **self.columns}


_MACB = {
    "Created": "...B",
    "Alarm time": "...B",
    "Start time": "...B",
    "Modified": "M...",
}


@dataclass
class TimelineEvent:
    source_id: int
    date: str
    time: str
    timezone: str
    MACB: str
    source: str
    sourcetype: str
    type: str
    user: str = ""
    host: str = ""
    short: str = ""
    desc: str = ""
    filename: str = ""
    notes: str = ""
    format: str = "JSON"
    extra: str = ""
    client_only: bool = False

    def as_row(self) -> dict[str, Any]:
        row = dict(self.__dict__)
        row.pop("client_only")
        return row


@dataclass(frozen=True)
class ParseWarning:
    descriptor: str
    key_path: str
    detail: str = "missing key"


@dataclass
class NormalizeResult:
    records: list[NormalizedRecord] = field(default_factory=list)
    events: list[TimelineEvent] = field(default_factory=list)
    warnings: list[ParseWarning] = field(default_factory=list)

    def extend(self, other: "NormalizeResult") -> None:
        self.records += other.records
        self.events += other.events
        self.warnings += other.warnings


@dataclass
class NormalizeContext:
    """Facts learned from earlier payloads that later payloads are rendered with."""
    customer_id: str = ""
    device_preferences: dict[str, dict] = field(default_factory=dict)
    audio_base_url: str = _catalog.DEFAULT_BASE_URL

    def timezone_for(self, serial: str = "") -> str:
        prefs = self.device_preferences.get(serial)
        if prefs and prefs.get("timeZoneId"):
            return prefs["timeZoneId"]
        for p in self.device_preferences.values():
            if p.get("timeZoneId"):
                return p["timeZoneId"]
        return "UTC"

    @classmethod
    def from_case(cls, case: CaseDatabase) -> "NormalizeContext":
        """Seed the context from rows an earlier (cloud) ingestion left in the case."""
        ctx = cls()
        for row in case.rows("ACCOUNT"):
            if row["customer_id"] and not ctx.customer_id:
                ctx.customer_id = row["customer_id"]
        for row in case.rows("ALEXA_DEVICE"):
            if row["device_serial_number"] and row["timezone"]:
                ctx.device_preferences[row["device_serial_number"]] = {"timeZoneId": row["timezone"]}
        return ctx


# ---------------------------------------------------------------------------
# JSON helpers

def decode_payload(payload: bytes) -> Any:
    if payload[:2] == b"\x1f\x8b":
        try:
            payload = gzip.decompress(payload)
        except (OSError, EOFError, zlib.error) as exc:
            raise PayloadError(f"bad gzip stream: {exc}") from exc
    try:
        return json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PayloadError(f"payload is not JSON: {exc}") from exc


def _iter_values(obj: Any) -> list[Any]:
    if isinstance(obj, list):
        return obj
    if isinstance(obj, dict):
        return list(obj.values())
    return []


def missing_key_paths(doc: Any, path: str) -> list[str]:
    """Concrete key paths under ``doc`` where ``path`` cannot be followed."""
    missing: list[str] = []

    def walk(node: Any, segs: list[str], where: str) -> None:
        if not segs:
            return
        seg, rest = segs[0], segs[1:]
        iterate = seg.endswith("[]")
        key = seg[:-2] if iterate else seg
        here = f"{where}.{key}" if where else key
        if not isinstance(node, dict) or key not in node:
            missing.append(here)
            return
        child = node[key]
        if iterate:
            if isinstance(child, dict) and all(not isinstance(v, dict) for v in child.values()):
                child = [child]  # a single object where a list was expected
            items = child if isinstance(child, list) else _iter_values(child)
            keys = list(child) if isinstance(child, dict) else range(len(items))
            for k, item in zip(keys, items):
                walk(item, rest, f"{here}[{k}]")
        else:
            walk(child, rest, here)

    walk(doc, path.split("."), "")
    return missing


def _items(doc: Any, path: str) -> list[Any]:
    """Items reached by a ``a[].b[]`` style prefix."""
    nodes = [doc]
    for seg in path.split("."):
        iterate = seg.endswith("[]")
        key = seg[:-2] if iterate else seg
        nxt = []
        for n in nodes:
            if not isinstance(n, dict) or key not in n:
                continue
            child = n[key]
            if iterate:
                if isinstance(child, dict) and all(not isinstance(v, dict) for v in child.values()):
                    nxt.append(child)
                else:
                    nxt.extend(x for x in _iter_values(child))
            else:
                nxt.append(child)
        nodes = nxt
    return nodes


def _get(obj: Any, *path: str, default: Any = None) -> Any:
    for key in path:
        if isinstance(obj, list):
            obj = obj[0] if obj else None
        if not isinstance(obj, dict) or key not in obj:
            return default
        obj = obj[key]
    return obj


def _text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, (dict, list)):
        return canonical_json(value)
    return str(value)


def audio_id_from(value: str | None) -> str:
    """Extract an utterance id from either a bare id or a full audio URL."""
    if not value:
        return ""
    parts = urlsplit(value)
    if parts.scheme and parts.query:
        ids = parse_qs(parts.query).get("id")
        if ids:
            return ids[0]
    return value


def find_key(doc: Any, key: str) -> Any:
    """Depth-first search for ``key``; JSON-encoded string values are descended into."""
    stack = [doc]
    while stack:
        node = stack.pop()
        if isinstance(node, str) and node[:1] in "{[":
            try:
                node = json.loads(node)
            except ValueError:
                continue
        if isinstance(node, dict):
            if key in node:
                return node[key]
            stack.extend(node.values())
        elif isinstance(node, list):
            stack.extend(node)
    return None


# ---------------------------------------------------------------------------

class Normalizer:
    """Dispatch payloads on their catalog category.

    One instance is used per ingestion run so account and device-preference
    facts seen first can label later events.
    """

    def __init__(self, context: NormalizeContext | None = None):
        self.context = context or NormalizeContext()

    # -- public --------------------------------------------------------
    def normalize(self, payload: bytes | Any, descriptor: ApiDescriptor, source_id: int,
                  source: Operation | str = Operation.CLOUD, filename: str = "",
                  src_path: str = "") -> NormalizeResult:
        doc = decode_payload(payload) if isinstance(payload, (bytes, bytearray)) else payload
        result = NormalizeResult()
        for path in descriptor.expected_keys:
            for miss in missing_key_paths(doc, path):
                result.warnings.append(ParseWarning(descriptor.name, miss))
        handler = _HANDLERS.get(descriptor.name)
        if handler is None:
            handler = _CATEGORY_HANDLERS.get(descriptor.category)
        if handler is None:
            return result
        env = _Env(self.context, descriptor, source_id, str(Operation(source)), filename, src_path)
        handler(self, doc, env, result)
        for w in result.warnings:
            log.debug("%s: %s (%s)", w.descriptor, w.key_path, w.detail)
        return result

    def ingest(self, case: CaseDatabase, artifact: RawArtifact, descriptor: ApiDescriptor,
               payload: bytes | Any) -> NormalizeResult:
        """Normalize a preserved payload and write its rows, attributed to ``artifact``."""
        result = self.normalize(payload, descriptor, artifact.id, artifact.operation,
                                filename=artifact.saved_path, src_path=artifact.src_path)
        write_result(case, result)
        return result

    def todo_item(self, item: Mapping[str, Any], source_id: int, source: Operation | str,
                  filename: str = "", list_type: str = "") -> NormalizeResult:
        """Events for one to-do or shopping item, shared by cloud and app-database paths."""
        result = NormalizeResult()
        env = _Env(self.context, _catalog.get("todos TASK"), source_id, str(Operation(source)), filename, "")
        _todo_events(self, item, env, result, list_type)
        return result

    # -- event construction ---------------------------------------------
    def _event(self, env: "_Env", value: Any, kind: str, result: NormalizeResult, *,
               unit: EpochUnit = EpochUnit.AUTO, **cols: Any) -> None:
        try:
            stamp = epoch_to_utc(value, unit)
        except RangeError as exc:
            result.warnings.append(ParseWarning(env.descriptor.name, kind, str(exc)))
            return
        host = _text(cols.pop("host", ""))
        result.events.append(TimelineEvent(
            source_id=env.source_id,
            date=stamp.date,
            time=stamp.time,
            timezone=self.context.timezone_for(host),
            MACB=_MACB[kind],
            source=env.source,
            sourcetype=env.descriptor.sourcetype,
            type=kind,
            host=host,
            filename=env.filename,
            **{k: _text(v) for k, v in cols.items()},
        ))

    def audio_extra(self, audio_value: str | None) -> str:
        audio_id = audio_id_from(audio_value)
        if not audio_id:
            return ""
        url = _catalog.resolve(_catalog.get("utterance/audio/data"), self.context.audio_base_url,
                               {"id": audio_id})
        return f'User\'s voice: "{url}"'


@dataclass
class _Env:
    ctx: NormalizeContext
    descriptor: ApiDescriptor
    source_id: int
    source: str
    filename: str
    src_path: str

    def record(self, table: str, **cols: Any) -> NormalizedRecord:
        return NormalizedRecord(table, self.source_id, {k: _text(v) for k, v in cols.items()})


# ---------------------------------------------------------------------------
# handlers

def _account(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    ctx = env.ctx
    if env.descriptor.name == "household":
        for acct in _items(doc, "accounts[]"):
            out.records.append(env.record(
                "ACCOUNT", timezone=ctx.timezone_for(), customer_email=_get(acct, "email"),
                customer_name=_get(acct, "fullName"), customer_id=_get(acct, "id")))
        return
    auth = _get(doc, "authentication")
    if not isinstance(auth, dict):
        return
    if auth.get("customerId") and not ctx.customer_id:
        ctx.customer_id = auth["customerId"]
    out.records.append(env.record(
        "ACCOUNT", timezone=ctx.timezone_for(), customer_email=auth.get("customerEmail"),
        customer_name=auth.get("customerName"), customer_id=auth.get("customerId")))


def _device_preferences(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    for pref in _items(doc, "devicePreferences[]"):
        serial = _get(pref, "deviceSerialNumber")
        if serial:
            env.ctx.device_preferences[serial] = pref


def _devices(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    for dev in _items(doc, "devices[]"):
        serial = _get(dev, "serialNumber") or ""
        pref = env.ctx.device_preferences.get(serial, {})
        out.records.append(env.record(
            "ALEXA_DEVICE",
            device_account_name=_get(dev, "accountName"),
            device_account_id=_get(dev, "deviceAccountId"),
            customer_id=_get(dev, "deviceOwnerCustomerId"),
            device_serial_number=serial,
            device_type=_get(dev, "deviceType"),
            sw_version=_get(dev, "softwareVersion"),
            mac_address=_get(dev, "macAddress"),
            address=pref.get("deviceAddress"),
            postal_code=pref.get("postalCode"),
            locale=pref.get("locale"),
            timezone=pref.get("timeZoneId"),
        ))


def _wifi(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    for cfg in _items(doc, "values[]"):
        out.records.append(env.record(
            "SETTING_WIFI", ssid=_get(cfg, "ssid"), security_method=_get(cfg, "securityMethod"),
            pre_shared_key=_get(cfg, "preSharedKey")))


def _setting_misc(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    name = env.descriptor.setting_name or env.descriptor.name
    prefixes = {k.rsplit("[]", 1)[0] + "[]" for k in env.descriptor.expected_keys if "[]" in k}
    if not prefixes:
        out.records.append(env.record("SETTING_MISC", name=name, value=canonical_json(doc)))
        return
    prefix = max(prefixes, key=len)
    for item in _items(doc, prefix):
        out.records.append(env.record("SETTING_MISC", name=name, value=canonical_json(item)))


def _skills(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    for app in _items(doc, "apps[]"):
        released = _get(app, "productDetails", "releaseDate")
        release_date = ""
        if released not in (None, ""):
            try:
                release_date = format_utc(released)
            except RangeError as exc:
                out.warnings.append(ParseWarning(env.descriptor.name, "productDetails.releaseDate", str(exc)))
        linked = _get(app, "entitlementInfo", "accountLinked")
        out.records.append(env.record(
            "SKILL", title=_get(app, "title"), developer_name=_get(app, "developerInfo", "name"),
            account_linked="" if linked is None else bool(linked), release_date=release_date))


def _compatible_devices(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    details = find_key(doc, "applianceDetails")
    for uid, app in (details.items() if isinstance(details, dict) else enumerate(_iter_values(details))):
        if not isinstance(app, dict):
            continue
        created = _get(app, "applianceNetworkState", "createdAt")
        modified = _get(app, "friendlyNameModifiedAt")
        alexa_ids = _get(app, "alexaDeviceIdentifierList") or [{}]
        alexa = alexa_ids[0] if isinstance(alexa_ids, list) and alexa_ids else {}
        serial = _get(alexa, "dmsDeviceSerialNumber") or ""
        reach = _get(app, "applianceNetworkState", "reachability")
        if reach is None:
            reach = _get(app, "isReachable")
        reachable = "" if reach is None else str(reach in (True, "REACHABLE"))

        def stamp(v):
            try:
                return format_utc(v) if v is not None else ""
            except RangeError:
                return ""

        name = _get(app, "friendlyName")
        out.records.append(env.record(
            "COMPATIBLE_DEVICE", name=name, manufacture=_get(app, "manufacturerName"),
            model=_get(app, "modelName"), created=stamp(created), name_modified=stamp(modified),
            desc=_get(app, "friendlyDescription"), type=_get(app, "deviceType"), reachable=reachable,
            firmware_version=_get(app, "firmwareVersion"), appliance_id=_get(app, "applianceId") or uid,
            alexa_device_serial_number=serial, alexa_device_type=_get(alexa, "dmsDeviceTypeId")))
        common = dict(host=serial, user=env.ctx.customer_id, short=_get(app, "modelName") or "Compatible device",
                      desc=name, notes=_get(app, "manufacturerName"))
        if created is not None:
            n._event(env, created, "Created", out, **common)
        if modified is not None:
            n._event(env, modified, "Modified", out, **common)


def _todo_events(n: Normalizer, item: Mapping[str, Any], env: _Env, out: NormalizeResult,
                 list_type: str = "") -> None:
    kind = item.get("type") or list_type or ("SHOPPING_ITEM" if "SHOPPING_ITEM" in env.src_path else "TASK")
    common = dict(
        user=item.get("customerId") or env.ctx.customer_id,
        short="Shopping item" if kind == "SHOPPING_ITEM" else "To-do",
        desc=item.get("text"),
        notes="completed" if item.get("complete") in (True, 1, "1", "true", "True") else "",
        extra=n.audio_extra(item.get("originalAudioId")),
    )
    if item.get("createdDate") is not None:
        n._event(env, item["createdDate"], "Created", out, **common)
    if item.get("lastUpdatedDate") is not None:
        n._event(env, item["lastUpdatedDate"], "Modified", out, **common)


def _todos(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    list_type = "SHOPPING_ITEM" if "SHOPPING_ITEM" in env.descriptor.name else "TASK"
    for item in _items(doc, "values[]"):
        if isinstance(item, dict):
            _todo_events(n, item, env, out, list_type)


def _notifications(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    for note in _items(doc, "notifications[]"):
        common = dict(host=_get(note, "deviceSerialNumber"), user=env.ctx.customer_id, short="Notification",
                      desc=_get(note, "reminderLabel") or _get(note, "type"), notes=_get(note, "status"))
        if _get(note, "alarmTime") is not None:
            n._event(env, note["alarmTime"], "Alarm time", out, **common)
        if _get(note, "createdDate") is not None:
            n._event(env, note["createdDate"], "Created", out, **common)


def _cards(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    for card in _items(doc, "cards[]"):
        ts = _get(card, "creationTimestamp")
        if ts is None:
            continue
        n._event(env, ts, "Created", out,
                 host=_get(card, "sourceDevice", "serialNumber"),
                 user=_get(card, "registeredCustomerId") or env.ctx.customer_id,
                 short=_get(card, "cardType") or "Card",
                 desc=_get(card, "title"),
                 notes=_get(card, "playbackAudioAction", "mainText"),
                 extra=n.audio_extra(_get(card, "playbackAudioAction", "url")))


def _activity_summary(activity: Mapping[str, Any]) -> str:
    desc = activity.get("description")
    if isinstance(desc, str):
        try:
            desc = json.loads(desc)
        except ValueError:
            return desc
    if isinstance(desc, dict):
        return _text(desc.get("summary", ""))
    return _text(desc)


def _activities(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    for act in _items(doc, "activities[]"):
        ts = _get(act, "creationTimestamp")
        if ts is None:
            continue
        n._event(env, ts, "Created", out,
                 host=_get(act, "sourceDeviceIds", "serialNumber"),
                 user=_get(act, "registeredCustomerId") or env.ctx.customer_id,
                 short="History",
                 desc=_activity_summary(act),
                 notes=_get(act, "activityStatus"),
                 extra=n.audio_extra(_get(act, "utteranceId")))


def _media(n: Normalizer, doc: Any, env: _Env, out: NormalizeResult) -> None:
    query = parse_qs(urlsplit(env.src_path).query)
    serial = (query.get("deviceSerialNumber") or [""])[0]
    for item in _items(doc, "media[]"):
        ts = _get(item, "startTime")
        if ts is None:
            continue
        n._event(env, ts, "Start time", out,
                 host=_get(item, "deviceSerialNumber") or serial, user=env.ctx.customer_id,
                 short="Media", desc=_get(item, "title"), notes=_get(item, "providerId"))


_HANDLERS = {
    "household": _account,
    "device-preferences": _device_preferences,
    "devices/device": _devices,
    "wifi/configs": _wifi,
    "todos TASK": _todos,
    "todos SHOPPING_ITEM": _todos,
    "notifications": _notifications,
    "cards": _cards,
    "activities": _activities,
    "media/historical-queue": _media,
}
_CATEGORY_HANDLERS = {
    Category.ACCOUNT: _account,
    Category.CUSTOMER_SETTING: _setting_misc,
    Category.SKILL: _skills,
    Category.COMPATIBLE_DEVICE: _compatible_devices,
}

# Order in which payloads should be normalized so context is available.
CONTEXT_FIRST = ("bootstrap", "household", "device-preferences", "devices/device")


def context_order(descriptor: ApiDescriptor | None) -> int:
    if descriptor is None:
        return len(CONTEXT_FIRST) + 1
    return CONTEXT_FIRST.index(descriptor.name) if descriptor.name in CONTEXT_FIRST else len(CONTEXT_FIRST)


def write_result(case: CaseDatabase, result: NormalizeResult) -> int:
    by_table: dict[str, list[dict]] = {}
    for rec in result.records:
        by_table.setdefault(rec.target_table, []).append(rec.as_row())
    added = 0
    for table, rows in by_table.items():
        added += case.insert_rows(table, rows)
    if result.events:
        added += case.insert_rows("TIMELINE", [e.as_row() for e in result.events])
    return added


def _desc_digest(desc: str) -> str:
    return hashlib.sha1(desc.encode("utf-8")).hexdigest()


def correlate(case: CaseDatabase) -> int:
    """Flag client-side timeline events that have no cloud counterpart.

    Key: (sourcetype, UTC instant to the millisecond, host, SHA-1 of desc).
    Flags are recomputed from scratch on every call.
    """
    rows = list(case.timeline_with_rowid())

    def key(r) -> tuple:
        return (r["sourcetype"], r["date"], r["time"], r["host"], _desc_digest(r["desc"]))

    cloud = {key(r) for r in rows if r["source"] == Operation.CLOUD.value}
    flags = []
    count = 0
    for r in rows:
        if r["source"] == Operation.CLOUD.value:
            continue
        client_only = key(r) not in cloud
        count += client_only
        flags.append((r["_rowid"], client_only))
    case.set_client_only(flags)
    return count


def replay(case: CaseDatabase, artifact: RawArtifact, descriptor: ApiDescriptor,
           context: NormalizeContext | None = None) -> NormalizeResult:
    """Re-derive rows from a preserved file without writing them."""
    data = case.read_artifact(artifact)
    return Normalizer(context).normalize(data, descriptor, artifact.id, artifact.operation,
                                         filename=artifact.saved_path, src_path=artifact.src_path)
