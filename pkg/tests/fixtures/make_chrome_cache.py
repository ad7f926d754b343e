"""Regenerate the golden Chrome cache fixture.

Browses the mock service (corpus with one card later deleted server-side) and
writes every raw response into a block-file cache, plus the service's request
log. Run from the repository root:

    python3 tests/fixtures/make_chrome_cache.py
"""

import json
import shutil
from pathlib import Path

from cift import catalog
from cift.testing import MockAlexaService, VALID_EMAIL, VALID_PASSWORD
from cift.testing.blockfile import capture_session, write_capture_log
from cift.testing.corpus import synthetic_audio, with_deleted_card

HERE = Path(__file__).parent
OUT = HERE / "chrome_cache"
CARDS_CURSOR = 1484700000000
CAPTURED_AT_MS = 1484700000000


def page_urls(base: str, corpus) -> list[str]:
    urls = []
    for d in catalog.catalog():
        if d.name in ("utterance/audio/data", "yourskills"):
            continue  # skills live on a separate store host the Alexa web app does not call
        if d.name == "cards":
            urls.append(catalog.resolve(d, base, {"beforeCreationTime": CARDS_CURSOR}))
        elif d.name == "activities":
            urls.append(catalog.resolve(d, base, {"startTime": "", "size": 50}))
        elif d.name == "media/historical-queue":
            for dev in corpus.documents["devices/device"]["devices"]:
                urls.append(catalog.resolve(d, base, {"deviceSerialNumber": dev["serialNumber"],
                                                      "deviceType": dev["deviceType"], "size": 50}))
        elif d.name.startswith("todos"):
            urls.append(catalog.resolve(d, base, {"size": 100}))
        else:
            urls.append(catalog.resolve(d, base))
    return urls


def main() -> None:
    corpus = with_deleted_card()
    # one larger utterance so the cache also exercises a separate f_ file
    audio_id = corpus.referenced_audio_ids()[1]
    corpus.audio[audio_id] = synthetic_audio(audio_id, seconds=3.0)
    if OUT.exists():
        shutil.rmtree(OUT)
    with MockAlexaService(corpus) as svc:
        urls = page_urls(svc.base_url, corpus)
        urls.append(catalog.resolve(catalog.get("utterance/audio/data"), svc.base_url, {"id": audio_id}))
        keys = capture_session(svc.base_url, VALID_EMAIL, VALID_PASSWORD, urls, OUT, created_ms=CAPTURED_AT_MS)
        write_capture_log(HERE / "chrome_cache_requests.json", svc.log)
    print(json.dumps({"entries": len(keys)}))


if __name__ == "__main__":
    main()
