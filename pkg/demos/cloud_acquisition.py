"""Walk the whole cloud catalog against the local mock service.

    python3 demos/cloud_acquisition.py [case-dir]

Starts the mock with the synthetic corpus, logs in, fetches every endpoint,
and prints what landed in the case database.
"""

import sys
import tempfile
from pathlib import Path

from cift.acquire import acquire_all, create_session
from cift.store import init_case, verify_evidence
from cift.testing import MockAlexaService, VALID_EMAIL, VALID_PASSWORD, default_corpus


def main(case_dir: Path) -> None:
    case = init_case(case_dir)
    with MockAlexaService(default_corpus()) as svc:
        print(f"mock service at {svc.base_url}")
        session = create_session(svc.base_url, VALID_EMAIL, VALID_PASSWORD)
        print(f"logged in as customer {session.customer_id}\n")
        report = acquire_all(session, case)
        methods = sorted({e.method for e in svc.log})
    print(report.format())
    print(f"\nHTTP methods the service saw: {', '.join(methods)}")

    print("\nrows per table:")
    for table, n in case.row_counts().items():
        print(f"  {table:<18} {n}")

    # Wi-Fi credentials come back from the cloud in plain text
    for wifi in case.rows("SETTING_WIFI"):
        print(f"\nWi-Fi {wifi['ssid']!r} ({wifi['security_method']}): key {wifi['pre_shared_key']!r}")

    print("\nfirst timeline events:")
    for ev in case.timeline()[:5]:
        print(f"  {ev['date']} {ev['time']}  {ev['short']:<18} {ev['desc'][:50]}")
    print(f"\nintegrity violations: {len(verify_evidence(case))}")
    print(f"case directory: {case_dir}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="cift-demo-")) / "case")
