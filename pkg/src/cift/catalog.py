"""Data-driven catalog of the unofficial Alexa cloud endpoints.

The shipped catalog lives in ``data/catalog.ini`` so endpoint paths can be
updated without touching code when the cloud side drifts.
"""

from __future__ import annotations

import configparser
import enum
import functools
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping
from urllib.parse import quote, urlsplit

from .errors import ConfigurationError, ParameterError

DEFAULT_BASE_URL = "https://pitangui.amazon.com"
DEFAULT_SKILLS_BASE_URL = "https://skills-store.amazon.com"
SKILLS_ACCEPT = "application/vnd+amazon.uitoolkit+json"
ALEXA_HOSTS = ("pitangui.amazon.com", "alexa.amazon.com")


def is_alexa_url(url: str) -> bool:
    """Default filter for cache scans: the URL mentions an Alexa web host."""
    return any(h in url for h in ALEXA_HOSTS)


class Category(str, enum.Enum):
    ACCOUNT = "ACCOUNT"
    ALEXA_DEVICE = "ALEXA_DEVICE"
    CUSTOMER_SETTING = "CUSTOMER_SETTING"
    SKILL = "SKILL"
    COMPATIBLE_DEVICE = "COMPATIBLE_DEVICE"
    USER_ACTIVITY = "USER_ACTIVITY"
    ETC = "ETC"


class Pagination(str, enum.Enum):
    NONE = "NONE"
    BEFORE_CREATION_TIME = "BEFORE_CREATION_TIME"
    START_TIME_SIZE_OFFSET = "START_TIME_SIZE_OFFSET"
    SIZE_ONLY = "SIZE_ONLY"
    DEVICE_QUEUE = "DEVICE_QUEUE"

    @property
    def arity(self) -> int:
        return _PAGINATION_ARITY[self]


_PAGINATION_ARITY = {
    Pagination.NONE: 0,
    Pagination.BEFORE_CREATION_TIME: 1,
    Pagination.START_TIME_SIZE_OFFSET: 2,
    Pagination.SIZE_ONLY: 1,
    Pagination.DEVICE_QUEUE: 3,
}


@dataclass(frozen=True)
class ApiDescriptor:
    name: str
    url_template: str
    category: Category
    pagination: Pagination
    params: tuple[str, ...] = ()
    extra_headers: Mapping[str, str] = field(default_factory=dict)
    expected_keys: tuple[str, ...] = ()
    normalization_targets: tuple[str, ...] = ()
    description: str = ""
    aliases: tuple[str, ...] = ()
    alternate_urls: tuple[str, ...] = ()
    pinned_host: bool = False
    sourcetype: str = ""
    setting_name: str = ""

    def __post_init__(self):
        n = self.url_template.count("{}")
        if n != len(self.params):
            raise ConfigurationError(
                f"{self.name}: template has {n} placeholders but {len(self.params)} params")
        if len(self.params) < self.pagination.arity:
            raise ConfigurationError(f"{self.name}: {self.pagination.value} needs {self.pagination.arity} params")

    @property
    def path_template(self) -> str:
        parts = urlsplit(self.url_template)
        return parts.path + ("?" + parts.query if parts.query else "")

    @property
    def path(self) -> str:
        """URL path without query, used to match cached URLs back to descriptors."""
        return urlsplit(self.url_template).path

    def matches(self, name: str) -> bool:
        return name == self.name or name in self.aliases


def _split_list(value: str) -> tuple[str, ...]:
    items = re.split(r"[,\n]", value)
    return tuple(i.strip() for i in items if i.strip())


def _parse_headers(value: str) -> dict[str, str]:
    headers = {}
    for line in value.splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            headers[k.strip()] = v.strip()
    return headers


def parse_catalog(text: str) -> list[ApiDescriptor]:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string(text)
    out = []
    for name in parser.sections():
        sec = parser[name]
        try:
            out.append(ApiDescriptor(
                name=name,
                url_template=sec["url"],
                category=Category(sec["category"]),
                pagination=Pagination(sec.get("pagination", "NONE")),
                params=_split_list(sec.get("params", "")),
                extra_headers=_parse_headers(sec.get("headers", "")),
                expected_keys=_split_list(sec.get("expected_keys", "")),
                normalization_targets=_split_list(sec.get("targets", "")),
                description=sec.get("description", ""),
                aliases=_split_list(sec.get("aliases", "")),
                alternate_urls=_split_list(sec.get("alternate_urls", "")),
                pinned_host=sec.getboolean("pinned_host", fallback=False),
                sourcetype=sec.get("sourcetype", ""),
                setting_name=sec.get("setting_name", ""),
            ))
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"catalog entry [{name}]: {exc}") from exc
    return out


@functools.lru_cache(maxsize=None)
def _default_catalog() -> tuple[ApiDescriptor, ...]:
    text = resources.files("cift").joinpath("data/catalog.ini").read_text(encoding="utf-8")
    return tuple(parse_catalog(text))


def catalog(path: str | Path | None = None) -> list[ApiDescriptor]:
    """Return the endpoint catalog, either the shipped one or one loaded from ``path``."""
    if path is None:
        return list(_default_catalog())
    return parse_catalog(Path(path).read_text(encoding="utf-8"))


def get(name: str, descriptors: Iterable[ApiDescriptor] | None = None) -> ApiDescriptor:
    for d in descriptors if descriptors is not None else _default_catalog():
        if d.matches(name):
            return d
    raise KeyError(name)


def _fill(template: str, names: tuple[str, ...], params: Mapping[str, Any]) -> str:
    pieces = template.split("{}")
    out = [pieces[0]]
    for name, rest in zip(names, pieces[1:]):
        if name not in params:
            raise ParameterError(f"missing parameter {name!r}")
        out.append(quote(str(params[name]), safe=""))
        out.append(rest)
    return "".join(out)


def resolve(descriptor: ApiDescriptor, base_url: str = DEFAULT_BASE_URL,
            params: Mapping[str, Any] | None = None,
            skills_base_url: str = DEFAULT_SKILLS_BASE_URL,
            template: str | None = None) -> str:
    """Substitute ``params`` into the descriptor's template and rebase it.

    ``template`` may name one of the descriptor's ``alternate_urls``.
    """
    params = params or {}
    template = template or descriptor.url_template
    parts = urlsplit(template)
    path = parts.path + ("?" + parts.query if parts.query else "")
    host = skills_base_url if descriptor.pinned_host else base_url
    return host.rstrip("/") + _fill(path, descriptor.params, params)


def match_url(url: str, descriptors: Iterable[ApiDescriptor] | None = None) -> ApiDescriptor | None:
    """Find the descriptor a (cached) URL was produced from, ignoring host."""
    parts = urlsplit(url)
    query = parts.query
    candidates = []
    for d in descriptors if descriptors is not None else _default_catalog():
        paths = [urlsplit(u).path for u in (d.url_template,) + d.alternate_urls]
        if parts.path.rstrip("/") not in [p.rstrip("/") for p in paths]:
            continue
        # todos variants differ only by their fixed type= query value
        fixed = [kv for kv in urlsplit(d.url_template).query.split("&") if kv and "{}" not in kv
                 and not kv.startswith("offset=")]
        if all(kv in query.split("&") for kv in fixed):
            candidates.append((len(fixed), d))
    if not candidates:
        return None
    candidates.sort(key=lambda c: -c[0])
    return candidates[0][1]
