"""GitHub client behaviour against a scripted fake session, plus the raw
archive round-trip."""

import os
import threading
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issuetriage.errors import (
    ArchiveError,
    AuthError,
    DataError,
    NetworkError,
    NotFoundError,
    RateLimitError,
)
from issuetriage.ingestion import (
    ArchiveWriter,
    GitHubClient,
    IssueRecord,
    RepoRef,
    fetch_corpus,
    read_archive,
    write_archive,
)


class FakeResponse:
    def __init__(self, status_code=200, payload=None, headers=None):
        self.status_code = status_code
        self._payload = payload if payload is not None else {}
        self.headers = headers or {}

    def json(self):
        return self._payload


class FakeSession:
    """Replays scripted responses; records every request it sees."""

    def __init__(self, script):
        # script: callable(url, params) -> FakeResponse, or list of responses
        self.script = script
        self.calls = []

    def get(self, url, params=None, headers=None, timeout=None):
        self.calls.append((url, dict(params or {})))
        if callable(self.script):
            return self.script(url, dict(params or {}))
        return self.script.pop(0)


def search_payload(names_and_stars, language="c"):
    return {
        "total_count": len(names_and_stars),
        "items": [
            {
                "name": name,
                "owner": {"login": f"{name}-owner"},
                "language": language,
                "stargazers_count": stars,
            }
            for name, stars in names_and_stars
        ],
    }


def issue_item(number, title="t", body="b", labels=(), pull=False, created="2021-03-01T12:00:00Z"):
    item = {
        "number": number,
        "title": title,
        "body": body,
        "labels": [{"name": name} for name in labels],
        "created_at": created,
    }
    if pull:
        item["pull_request"] = {"url": "x"}
    return item


REPO = RepoRef("octo", "project")


def make_client(session, **kwargs):
    sleeps = []
    client = GitHubClient(
        token="test-token",
        session=session,
        sleeper=sleeps.append,
        **kwargs,
    )
    return client, sleeps


# ---------------------------------------------------------------------------
# fetch_top_repositories
# ---------------------------------------------------------------------------


def test_search_returns_ordered_repos():
    payload = search_payload([("linux", 100_000), ("netdata", 60_000), ("redis", 50_000)])
    session = FakeSession([FakeResponse(payload=payload)])
    client, _ = make_client(session)
    repos = client.fetch_top_repositories("c", 3)
    assert [r.name for r in repos] == ["linux", "netdata", "redis"]
    stars = [r.star_count for r in repos]
    assert stars == sorted(stars, reverse=True)
    assert all(r.primary_language == "c" for r in repos)
    # the request asked for stars-descending
    _, params = session.calls[0]
    assert params["sort"] == "stars" and params["order"] == "desc"
    assert params["q"] == 'language:"c"'


def test_search_unknown_language_is_empty_not_error():
    session = FakeSession([FakeResponse(payload={"total_count": 0, "items": []})])
    client, _ = make_client(session)
    assert client.fetch_top_repositories("no-such-language", 5) == []


def test_search_paginates_to_count():
    pages = [
        FakeResponse(payload=search_payload([(f"repo{i}", 1000 - i) for i in range(100)])),
        FakeResponse(payload=search_payload([(f"repo{100 + i}", 900 - i) for i in range(100)])),
    ]
    session = FakeSession(pages)
    client, _ = make_client(session)
    repos = client.fetch_top_repositories("go", 150)
    assert len(repos) == 150
    assert len(session.calls) == 2


def test_search_rate_limit_surfaces_retry_after():
    session = FakeSession(
        [
            FakeResponse(
                status_code=403,
                headers={"X-RateLimit-Remaining": "0", "Retry-After": "37"},
            )
        ]
    )
    client, _ = make_client(session)
    with pytest.raises(RateLimitError) as info:
        client.fetch_top_repositories("c", 1)
    assert info.value.retry_after == 37.0


def test_search_count_must_be_positive():
    client, _ = make_client(FakeSession([]))
    with pytest.raises(ValueError):
        client.fetch_top_repositories("c", 0)


def test_auth_failure():
    session = FakeSession([FakeResponse(status_code=401)])
    client, _ = make_client(session)
    with pytest.raises(AuthError):
        client.fetch_top_repositories("c", 1)


# ---------------------------------------------------------------------------
# iter_issues
# ---------------------------------------------------------------------------


def test_issues_paginate_without_duplicates():
    pages = [
        FakeResponse(payload=[issue_item(i) for i in range(1, 101)]),
        FakeResponse(payload=[issue_item(i) for i in range(101, 201)]),
        FakeResponse(payload=[issue_item(i) for i in range(201, 251)]),
    ]
    session = FakeSession(pages)
    client, _ = make_client(session)
    records = list(client.iter_issues(REPO, page_size=100))
    assert len(records) == 250
    assert len({r.issue_number for r in records}) == 250
    assert len(session.calls) == 3
    assert [params["page"] for _, params in session.calls] == [1, 2, 3]
    assert all(params["state"] == "all" for _, params in session.calls)


def test_issues_empty_repo():
    session = FakeSession([FakeResponse(payload=[])])
    client, _ = make_client(session)
    assert list(client.iter_issues(REPO)) == []


def test_issue_without_labels_and_pull_request_flag():
    payload = [
        issue_item(1, labels=()),
        issue_item(2, labels=("Bug", "wontfix"), pull=True),
    ]
    session = FakeSession([FakeResponse(payload=payload)])
    client, _ = make_client(session)
    first, second = list(client.iter_issues(REPO, page_size=10))
    assert first.raw_labels == ()
    assert not first.is_pull_request
    assert second.raw_labels == ("Bug", "wontfix")  # casing and order preserved
    assert second.is_pull_request


def test_issues_pause_on_rate_limit_then_resume():
    responses = [
        FakeResponse(status_code=403, headers={"X-RateLimit-Remaining": "0", "Retry-After": "9"}),
        FakeResponse(payload=[issue_item(1), issue_item(2)]),
    ]
    session = FakeSession(responses)
    client, sleeps = make_client(session)
    records = list(client.iter_issues(REPO, page_size=100))
    assert [r.issue_number for r in records] == [1, 2]
    assert 9.0 in sleeps  # paused, never dropped the page


def test_connection_errors_retried_then_succeed():
    import requests

    state = {"failures": 2}

    class FlakySession:
        def __init__(self):
            self.calls = 0

        def get(self, url, params=None, headers=None, timeout=None):
            self.calls += 1
            if state["failures"] > 0:
                state["failures"] -= 1
                raise requests.ConnectionError("boom")
            return FakeResponse(payload=[issue_item(3)])

    session = FlakySession()
    client, sleeps = make_client(session)
    records = list(client.iter_issues(REPO, page_size=10))
    assert [r.issue_number for r in records] == [3]
    assert session.calls == 3
    assert sleeps == [0.5, 1.0]


def test_governor_waits_when_budget_exhausted():
    """Budget accounting is shared: once remaining hits 0, the next request
    waits for the reset time before going out."""
    from issuetriage.ingestion import RateLimitGovernor

    clock = {"now": 1000.0}
    waits = []

    def sleeper(seconds):
        waits.append(seconds)
        clock["now"] += seconds

    governor = RateLimitGovernor(sleeper=sleeper, clock=lambda: clock["now"])
    responses = [
        FakeResponse(payload=[issue_item(1)],
                     headers={"X-RateLimit-Remaining": "0", "X-RateLimit-Reset": "1030"}),
        FakeResponse(payload=[]),
    ]
    session = FakeSession(responses)
    client = GitHubClient(token="t", session=session, sleeper=sleeper, governor=governor)
    records = list(client.iter_issues(REPO, page_size=1))
    assert len(records) == 1
    assert waits == [30.0]  # waited for the reset before page 2
    assert clock["now"] >= 1030.0


def test_transient_errors_retried_with_backoff():
    responses = [
        FakeResponse(status_code=502),
        FakeResponse(status_code=503),
        FakeResponse(payload=[issue_item(7)]),
    ]
    session = FakeSession(responses)
    client, sleeps = make_client(session)
    records = list(client.iter_issues(REPO, page_size=50))
    assert [r.issue_number for r in records] == [7]
    assert sleeps == [0.5, 1.0]  # bounded exponential backoff


def test_transient_errors_eventually_surface():
    session = FakeSession([FakeResponse(status_code=502) for _ in range(10)])
    client, _ = make_client(session, max_retries=3)
    with pytest.raises(NetworkError):
        list(client.iter_issues(REPO))


def test_repository_not_found():
    session = FakeSession([FakeResponse(status_code=404)])
    client, _ = make_client(session)
    with pytest.raises(NotFoundError):
        list(client.iter_issues(REPO))


# ---------------------------------------------------------------------------
# Archive
# ---------------------------------------------------------------------------


def record(number, title="hello", body="world", labels=("bug",), pull=False, stars=5):
    return IssueRecord(
        repo=RepoRef("octo", "project", primary_language="go", star_count=stars),
        issue_number=number,
        title=title,
        body=body,
        raw_labels=tuple(labels),
        created_at=datetime(2021, 4, 1, 12, 30, tzinfo=timezone.utc) + timedelta(minutes=number),
        is_pull_request=pull,
    )


def test_write_then_read_roundtrip(tmp_path):
    records = [record(1), record(2, body="line1\nline2\r\nline3"), record(3, labels=())]
    path = tmp_path / "archive.jsonl"
    manifest = write_archive(records, path)
    assert manifest.total_written == 3
    assert manifest.fetched_counts == {"octo/project": 3}
    assert path.read_text().count("\n") == 3
    loaded = list(read_archive(path))
    assert loaded == records


def test_rewrite_is_idempotent(tmp_path):
    records = [record(1), record(2), record(3)]
    path = tmp_path / "archive.jsonl"
    write_archive(records, path)
    manifest = write_archive(records, path)
    assert manifest.total_written == 0
    assert manifest.archive_total == 3
    assert len(list(read_archive(path))) == 3


def test_newline_bodies_roundtrip_byte_exact(tmp_path):
    body = "first\nsecond\n\ttabbed\n\"quoted\" and \\ backslash\nлиния"
    path = tmp_path / "archive.jsonl"
    write_archive([record(1, body=body)], path)
    loaded = list(read_archive(path))
    assert loaded[0].body == body
    assert len(path.read_text(encoding="utf-8").splitlines()) == 1


issue_strategy = st.builds(
    record,
    number=st.integers(min_value=1, max_value=10_000),
    title=st.text(max_size=60),
    body=st.text(max_size=200),
    labels=st.lists(st.text(min_size=1, max_size=15), max_size=4).map(tuple),
    pull=st.booleans(),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(issue_strategy, max_size=25))
def test_roundtrip_property(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("arch") / "a.jsonl"
    write_archive(records, path)
    loaded = list(read_archive(path))
    unique = {}
    for rec in records:
        unique.setdefault(rec.key(), rec)
    assert loaded == list(unique.values())


def test_malformed_record_reports_position(tmp_path):
    bad = IssueRecord(
        repo=RepoRef("o", "r"),
        issue_number=-3,
        title="t",
        body="b",
        raw_labels=(),
        created_at=datetime(2021, 1, 1, tzinfo=timezone.utc),
    )
    with pytest.raises(ArchiveError, match="record 2"):
        write_archive([record(1), bad], tmp_path / "a.jsonl")


def test_corrupt_line_reports_line_number(tmp_path):
    path = tmp_path / "a.jsonl"
    path.write_text("not json at all\n", encoding="utf-8")
    with pytest.raises(ArchiveError, match="line 1"):
        list(read_archive(path))


def test_corrupt_line_mid_file(tmp_path):
    path = tmp_path / "a.jsonl"
    write_archive([record(1)], path)
    with path.open("a", encoding="utf-8") as handle:
        handle.write('{"owner": "x"}\n')
    with pytest.raises(ArchiveError, match="line 2"):
        list(read_archive(path))


def test_missing_archive_is_data_error(tmp_path):
    with pytest.raises(DataError):
        list(read_archive(tmp_path / "none.jsonl"))


def test_empty_file_is_empty_stream(tmp_path):
    path = tmp_path / "a.jsonl"
    path.write_text("", encoding="utf-8")
    assert list(read_archive(path)) == []


def test_pull_request_flag_partitions_stream(tmp_path):
    records = [record(1), record(2, pull=True), record(3), record(4, pull=True)]
    path = tmp_path / "a.jsonl"
    write_archive(records, path)
    loaded = list(read_archive(path))
    issues = [r for r in loaded if not r.is_pull_request]
    pulls = [r for r in loaded if r.is_pull_request]
    assert len(issues) + len(pulls) == len(loaded) == 4
    assert {r.issue_number for r in pulls} == {2, 4}


def test_archive_writer_append_across_sessions(tmp_path):
    path = tmp_path / "a.jsonl"
    with ArchiveWriter(path) as writer:
        writer.write(record(1))
    with ArchiveWriter(path) as writer:
        assert writer.write(record(1)) is False  # dedup across sessions
        assert writer.write(record(2)) is True
    assert len(list(read_archive(path))) == 2


# ---------------------------------------------------------------------------
# Concurrent fetch pipeline
# ---------------------------------------------------------------------------


@pytest.mark.skipif(
    not os.environ.get("ISSUETRIAGE_LIVE_API"),
    reason="live API smoke test; set ISSUETRIAGE_LIVE_API=1 (and GITHUB_TOKEN) to run",
)
def test_live_search_ordering_smoke():
    client = GitHubClient()
    repos = client.fetch_top_repositories("rust", 3)
    assert len(repos) == 3
    stars = [r.star_count for r in repos]
    assert stars == sorted(stars, reverse=True)


def test_fetch_corpus_concurrent_workers(tmp_path):
    repos = {f"repo{i}": [issue_item(j) for j in range(1, 6)] for i in range(6)}
    lock = threading.Lock()
    active = {"now": 0, "peak": 0}

    def script(url, params):
        if "/search/repositories" in url:
            return FakeResponse(
                payload=search_payload([(name, 10) for name in sorted(repos)], "go")
            )
        name = url.rsplit("/", 2)[-2]
        with lock:
            active["now"] += 1
            active["peak"] = max(active["peak"], active["now"])
        try:
            return FakeResponse(payload=repos[name])
        finally:
            with lock:
                active["now"] -= 1

    session = FakeSession(script)
    client, _ = make_client(session)
    manifest = fetch_corpus(
        client, ["go"], repos_per_language=6, out_path=tmp_path / "a.jsonl", max_workers=3
    )
    assert manifest.total_written == 30
    assert sum(manifest.fetched_counts.values()) == 30
    assert set(manifest.languages) == {"go"}
    records = list(read_archive(tmp_path / "a.jsonl"))
    assert len(records) == 30
    assert len({r.key() for r in records}) == 30
