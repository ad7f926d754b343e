import json
from pathlib import Path

import pytest

from cift.acquire import acquire_all, create_session
from cift.store import init_case
from cift.testing import MockAlexaService, VALID_EMAIL, VALID_PASSWORD, default_corpus

FIXTURES = Path(__file__).parent / "fixtures"
CHROME_CACHE = FIXTURES / "chrome_cache"
CHROME_REQUESTS = FIXTURES / "chrome_cache_requests.json"


@pytest.fixture
def case(tmp_path):
    c = init_case(tmp_path / "case")
    yield c
    c.close()


@pytest.fixture(scope="module")
def service():
    with MockAlexaService(default_corpus()) as svc:
        yield svc


@pytest.fixture
def session(service):
    return create_session(service.base_url, VALID_EMAIL, VALID_PASSWORD)


@pytest.fixture(scope="module")
def cloud_case(tmp_path_factory, service):
    """One full acquisition against the default corpus, shared read-only by a module."""
    c = init_case(tmp_path_factory.mktemp("cloud") / "case")
    s = create_session(service.base_url, VALID_EMAIL, VALID_PASSWORD)
    report = acquire_all(s, c)
    yield c, report
    c.close()


def captured_urls() -> set[str]:
    return set(json.loads(CHROME_REQUESTS.read_text())["urls"])


def portable_dump(case) -> dict[str, list[tuple]]:
    """Case contents with ids and case-local paths replaced, so two cases can be compared."""
    arts = {a.id: a for a in case.artifacts()}
    base = str(case.base_dir)

    def origin(source_id):
        a = arts[source_id]
        return (a.src_path, a.sha1)

    out = {"ACQUIRED_FILE": sorted((a.operation.value, a.src_path, a.desc, a.sha1) for a in arts.values())}
    from cift.store import TABLE_COLUMNS
    for table in TABLE_COLUMNS:
        rows = []
        for r in case.rows(table):
            r = dict(r, source_id=origin(r["source_id"]))
            if "filename" in r:
                r["filename"] = str(r["filename"]).replace(base, "<case>")
            rows.append(tuple(sorted((k, repr(v)) for k, v in r.items())))
        out[table] = sorted(rows)
    return out


_criteria: dict[int, tuple[str, bool]] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "_acceptance", None)
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker
    if report.when == "call" or report.failed:
        _criteria[number] = (title, report.passed and not report.skipped)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result()._acceptance = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
