import pytest

from cift import catalog
from cift.catalog import Category, Pagination, SKILLS_ACCEPT, match_url, resolve
from cift.errors import ConfigurationError, ParameterError

BASE = "https://pitangui.amazon.com"
EXPECTED = [
    "bootstrap", "household", "devices/device", "device-preferences", "wifi/configs", "bluetooth",
    "traffic/settings", "wake-word", "third-party", "son/householdaccounts", "yourskills", "phenix",
    "todos TASK", "todos SHOPPING_ITEM", "notifications", "cards", "activities", "media/historical-queue",
    "utterance/audio/data",
]


def test_membership_is_fixed():
    assert sorted(d.name for d in catalog.catalog()) == sorted(EXPECTED)


def test_categories_are_the_seven():
    assert {d.category for d in catalog.catalog()} <= set(Category)
    assert len(Category) == 7


def test_wifi_descriptor():
    d = catalog.get("wifi/configs")
    assert d.category is Category.CUSTOMER_SETTING
    assert d.normalization_targets == ("SETTING_WIFI",)


def test_skills_accept_header_and_host():
    d = catalog.get("yourskills")
    assert d.extra_headers["Accept"] == "application/vnd+amazon.uitoolkit+json" == SKILLS_ACCEPT
    assert resolve(d, BASE).startswith("https://skills-store.amazon.com/")
    assert resolve(d, BASE, skills_base_url="http://127.0.0.1:9").startswith("http://127.0.0.1:9/")


def test_cards_pagination():
    d = catalog.get("cards")
    assert d.pagination is Pagination.BEFORE_CREATION_TIME
    assert d.url_template.endswith("cards?beforeCreationTime={}")


def test_resolve_examples():
    assert resolve(catalog.get("todos TASK"), BASE, {"size": 100}) == BASE + "/api/todos?type=TASK&size=100"
    assert resolve(catalog.get("bootstrap"), BASE, {}) == BASE + "/api/bootstrap"
    assert resolve(catalog.get("activities"), BASE, {"startTime": "", "size": 50}) == \
        BASE + "/api/activities?startTime=&size=50&offset=-1"


def test_resolve_is_pure_and_rebases():
    d = catalog.get("household")
    assert resolve(d, "http://127.0.0.1:1234/") == resolve(d, "http://127.0.0.1:1234") == \
        "http://127.0.0.1:1234/api/household"


def test_missing_parameter_names_placeholder():
    with pytest.raises(ParameterError, match="beforeCreationTime"):
        resolve(catalog.get("cards"), BASE, {})


def test_audio_id_is_url_encoded():
    url = resolve(catalog.get("utterance/audio/data"), BASE, {"id": "A:1.0/x y"})
    assert url.endswith("?id=A%3A1.0%2Fx%20y")


def test_phoenix_alias_and_authentication_alternate():
    assert catalog.get("phoenix").name == "phenix"
    boot = catalog.get("bootstrap")
    assert any(u.endswith("/api/authentication") for u in boot.alternate_urls)
    assert match_url(BASE + "/api/authentication") is boot


def test_placeholder_count_matches_params():
    for d in catalog.catalog():
        assert d.url_template.count("{}") == len(d.params) >= d.pagination.arity


def test_match_url_distinguishes_todo_lists():
    assert match_url(BASE + "/api/todos?type=SHOPPING_ITEM&size=100").name == "todos SHOPPING_ITEM"
    assert match_url(BASE + "/api/todos?type=TASK&size=1").name == "todos TASK"
    assert match_url(BASE + "/api/unknown") is None


def test_catalog_file_is_data(tmp_path):
    p = tmp_path / "cat.ini"
    p.write_text("[thing]\nurl = https://h/api/x?a={}\ncategory = ETC\nparams = a\n")
    [d] = catalog.catalog(p)
    assert resolve(d, "https://other", {"a": 1}) == "https://other/api/x?a=1"


def test_bad_catalog_entry(tmp_path):
    p = tmp_path / "cat.ini"
    p.write_text("[thing]\nurl = https://h/api/x?a={}\ncategory = ETC\n")
    with pytest.raises(ConfigurationError):
        catalog.catalog(p)
