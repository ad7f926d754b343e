"""Ingest synthetic Android and iOS app data, then export a timeline.

    python3 demos/companion_app_timeline.py [out-dir]

Builds app directories that mimic a phone extraction, ingests them, and
writes both export formats next to the case.
"""

import sys
import tempfile
from pathlib import Path

from cift.export import export_jsonl, export_l2t_csv
from cift.ingest import ingest_android, ingest_ios
from cift.store import init_case
from cift.testing.appdata import build_android_app_dir, build_ios_backup_dir


def main(out: Path) -> None:
    android = build_android_app_dir(out / "extraction" / "android")
    ios = build_ios_backup_dir(out / "extraction" / "ios")
    case = init_case(out / "case")

    for report in (ingest_android(case, android), ingest_ios(case, ios)):
        print(report.format(), end="\n\n")

    # the raw access token never reaches the case; only its digest does
    for row in case.rows("SETTING_MISC"):
        print(f"{row['name']}: {row['value']}")

    n = export_l2t_csv(case, out / "timeline.csv")
    m = export_jsonl(case, out / "case.jsonl")
    print(f"\n{n} events -> {out / 'timeline.csv'}")
    print(f"{m} records -> {out / 'case.jsonl'}")
    print("\n" + (out / "timeline.csv").read_text(encoding="utf-8").splitlines()[1])


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="cift-demo-")))
