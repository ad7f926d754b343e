"""Fixture corpus backing the mock cloud service.

Documents are loaded from ``fixtures/*.json``; every personal value in them is
invented and labelled as such. Card and activity lists can be padded with
generated entries to exercise pagination.
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import wave
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

_DOC_FILES = {
    "bootstrap": "bootstrap.json",
    "household": "household.json",
    "devices/device": "devices.json",
    "device-preferences": "device-preferences.json",
    "wifi/configs": "wifi-configs.json",
    "bluetooth": "bluetooth.json",
    "traffic/settings": "traffic-settings.json",
    "wake-word": "wake-word.json",
    "third-party": "third-party.json",
    "son/householdaccounts": "householdaccounts.json",
    "yourskills": "yourskills.json",
    "phenix": "phenix.json",
    "todos TASK": "todos-task.json",
    "todos SHOPPING_ITEM": "todos-shopping.json",
    "notifications": "notifications.json",
    "media/historical-queue": "media-historical-queue.json",
}

VALID_EMAIL = "synthetic.user@example.com"
VALID_PASSWORD = "synthetic#password"


def load_fixture(name: str) -> Any:
    text = resources.files("cift.testing").joinpath("fixtures", name).read_text(encoding="utf-8")
    return json.loads(text)


def synthetic_audio(audio_id: str, seconds: float = 0.25) -> bytes:
    """Small deterministic WAV blob standing in for a recorded utterance."""
    rate = 8000
    seed = hashlib.sha1(audio_id.encode("utf-8")).digest()
    frames = bytes(seed[i % len(seed)] for i in range(int(rate * seconds)))
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(rate)
        w.writeframes(frames)
    return buf.getvalue()


@dataclass
class FixtureCorpus:
    documents: dict[str, Any] = field(default_factory=dict)
    cards: list[dict] | None = None
    activities: list[dict] | None = None
    audio: dict[str, bytes] = field(default_factory=dict)
    purged_audio: set[str] = field(default_factory=set)
    email: str = VALID_EMAIL
    password: str = VALID_PASSWORD
    page_size: int = 50

    def validate(self) -> None:
        for label, items in (("cards", self.cards), ("activities", self.activities)):
            stamps = [i["creationTimestamp"] for i in items or []]
            if any(a <= b for a, b in zip(stamps, stamps[1:])):
                raise ValueError(f"{label} timestamps must be strictly decreasing")
        for audio_id in self.referenced_audio_ids():
            if audio_id not in self.audio and audio_id not in self.purged_audio:
                raise ValueError(f"audio id {audio_id!r} neither present nor marked purged")

    def referenced_audio_ids(self) -> list[str]:
        ids = []
        for card in self.cards or []:
            url = (card.get("playbackAudioAction") or {}).get("url")
            if url:
                ids.append(url)
        for act in self.activities or []:
            if act.get("utteranceId"):
                ids.append(act["utteranceId"])
        for name in ("todos TASK", "todos SHOPPING_ITEM"):
            for item in (self.documents.get(name) or {}).get("values", []):
                if item.get("originalAudioId"):
                    ids.append(item["originalAudioId"])
        return ids

    def without_card(self, title: str) -> "FixtureCorpus":
        clone = copy.deepcopy(self)
        clone.cards = [c for c in clone.cards or [] if c.get("title") != title]
        return clone


def _generated_card(i: int, ts: int) -> dict:
    serial = "TESTSERIAL0001" if i % 2 else "TESTSERIAL0002"
    return {
        "cardType": "TextCard",
        "creationTimestamp": ts,
        "id": f"synthetic-card-{i:04d}",
        "playbackAudioAction": {
            "mainText": f"synthetic question number {i}",
            "url": f"A3S5BH2HU6VAYF:1.0/synthetic/{serial}/TNIH_2V.synthetic-card-{i:04d}",
        },
        "sourceDevice": {"serialNumber": serial},
        "title": f"Synthetic card {i}",
    }


def _generated_activity(i: int, ts: int) -> dict:
    serial = "TESTSERIAL0001" if i % 2 else "TESTSERIAL0002"
    return {
        "activityStatus": "SUCCESS" if i % 3 else "FAULT",
        "creationTimestamp": ts,
        "description": json.dumps({"summary": f"synthetic request {i}"}),
        "id": f"synthetic-activity-{i:04d}",
        "registeredCustomerId": "E99SYNTH0LTESTZ",
        "sourceDeviceIds": [{"deviceType": "A3S5BH2HU6VAYF", "serialNumber": serial}],
        "utteranceId": f"A3S5BH2HU6VAYF:1.0/synthetic/{serial}/TNIH_2V.synthetic-activity-{i:04d}",
    }


def default_corpus(n_cards: int | None = None, n_activities: int | None = None,
                   page_size: int = 50, seed_items: bool = True) -> FixtureCorpus:
    """Corpus seeded with the published excerpt values.

    ``n_cards``/``n_activities`` give the total list lengths; ``None`` keeps
    just the seed entries (plus a few generated ones, 12 total).
    """
    docs = {name: load_fixture(f) for name, f in _DOC_FILES.items()}
    seed_cards = load_fixture("cards.json")["cards"] if seed_items else []
    seed_acts = load_fixture("activities.json")["activities"] if seed_items else []

    def fill(seed, total, make, step):
        items = list(seed)
        ts = (items[-1]["creationTimestamp"] if items else 1484600000000) - step
        i = len(items)
        while len(items) < total:
            items.append(make(i, ts))
            ts -= step
            i += 1
        return items

    cards = fill(seed_cards, 12 if n_cards is None else n_cards, _generated_card, 3_600_000)
    acts = fill(seed_acts, 12 if n_activities is None else n_activities, _generated_activity, 1_800_000)
    corpus = FixtureCorpus(documents=docs, cards=cards[: (12 if n_cards is None else n_cards)],
                           activities=acts[: (12 if n_activities is None else n_activities)],
                           page_size=page_size)
    corpus.audio = {aid: synthetic_audio(aid) for aid in corpus.referenced_audio_ids()}
    corpus.validate()
    return corpus


def empty_corpus() -> FixtureCorpus:
    """No endpoints at all: every API path answers 404."""
    return FixtureCorpus()


DELETED_CARD_TITLE = "Synthetic card deleted from the cloud"


def with_deleted_card(corpus: FixtureCorpus | None = None) -> FixtureCorpus:
    """Corpus whose newest card is later removed server-side.

    Browse this one to produce a client cache, then acquire from
    ``corpus.without_card(DELETED_CARD_TITLE)`` to get the cloud view.
    """
    clone = copy.deepcopy(corpus or default_corpus())
    newest = clone.cards[0]["creationTimestamp"] if clone.cards else 1484600000000
    card = _generated_card(9999, newest + 60_000)
    card["title"] = DELETED_CARD_TITLE
    clone.cards = [card] + list(clone.cards or [])
    clone.purged_audio.add(card["playbackAudioAction"]["url"])
    clone.validate()
    return clone
