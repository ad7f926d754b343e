"""Find a card the cloud no longer has by comparing it with a browser cache.

    python3 demos/deleted_card.py

The bundled Chrome cache was captured while the account still held one
extra card. The cloud acquisition runs against the same account after that
card was deleted, so correlation should single it out.
"""

import tempfile
from pathlib import Path

from cift.acquire import acquire_all, create_session
from cift.ingest import ingest_chrome
from cift.store import init_case
from cift.testing import MockAlexaService, VALID_EMAIL, VALID_PASSWORD
from cift.testing.corpus import DELETED_CARD_TITLE, with_deleted_card

CHROME_CACHE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "chrome_cache"


def main() -> None:
    case = init_case(Path(tempfile.mkdtemp(prefix="cift-demo-")) / "case")

    report = ingest_chrome(case, CHROME_CACHE)
    print(report.format(), end="\n\n")

    cloud = with_deleted_card().without_card(DELETED_CARD_TITLE)
    with MockAlexaService(cloud) as svc:
        acquire_all(create_session(svc.base_url, VALID_EMAIL, VALID_PASSWORD), case)

    rows = case.timeline()
    flagged = [r for r in rows if r["client_only"]]
    print(f"{len(rows)} timeline events, {len(flagged)} seen only on the client:")
    for r in flagged:
        print(f"  {r['date']} {r['time']} {r['source']}  {r['short']}: {r['desc']}")


if __name__ == "__main__":
    main()
