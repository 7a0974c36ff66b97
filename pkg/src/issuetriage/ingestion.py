"""GitHub issue harvesting: top repositories per language, their issues, and
a line-delimited archive of raw records.

The archive is UTF-8 JSON lines with the fields ``owner, repo, number, title,
body, labels, created_at, is_pull_request`` (plus the optional ``language``
and ``stars`` carried over from the repository search so records round-trip
losslessly). JSON string escaping keeps embedded newlines safe. Writing is
append-safe: re-writing the same (repo, issue_number) is a no-op.
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Iterator

import requests

from .errors import (
    ArchiveError,
    AuthError,
    DataError,
    GitHubError,
    NetworkError,
    NotFoundError,
    RateLimitError,
)

GITHUB_API = "https://api.github.com"
_TRANSIENT_STATUSES = frozenset({500, 502, 503, 504})


@dataclass(frozen=True)
class RepoRef:
    """A repository plus the metadata the search endpoint reports for it."""

    owner: str
    name: str
    primary_language: str = ""
    star_count: int = 0

    def __post_init__(self) -> None:
        if not self.owner or not self.name:
            raise ValueError("repository owner and name must be non-empty")
        if self.star_count < 0:
            raise ValueError("star_count must be non-negative")

    @property
    def full_name(self) -> str:
        return f"{self.owner}/{self.name}"


@dataclass(frozen=True)
class IssueRecord:
    """One raw issue as fetched; labels keep their original casing and order."""

    repo: RepoRef
    issue_number: int
    title: str
    body: str
    raw_labels: tuple[str, ...]
    created_at: datetime
    is_pull_request: bool = False

    def key(self) -> tuple[str, str, int]:
        return (self.repo.owner, self.repo.name, self.issue_number)


@dataclass
class IngestionManifest:
    languages: list[str] = field(default_factory=list)
    repos_per_language: int = 0
    fetched_counts: dict[str, int] = field(default_factory=dict)
    started_at: datetime | None = None
    finished_at: datetime | None = None
    total_written: int = 0
    archive_total: int = 0

    def to_dict(self) -> dict:
        return {
            "languages": list(self.languages),
            "repos_per_language": self.repos_per_language,
            "fetched_counts": dict(self.fetched_counts),
            "started_at": _format_ts(self.started_at) if self.started_at else None,
            "finished_at": _format_ts(self.finished_at) if self.finished_at else None,
            "total_written": self.total_written,
            "archive_total": self.archive_total,
        }


def _format_ts(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _parse_ts(value: str) -> datetime:
    return datetime.fromisoformat(value.replace("Z", "+00:00"))


class RateLimitGovernor:
    """Shared budget accounting for API calls across worker threads.

    Tracks the remaining/reset headers under a lock; when the budget is
    exhausted, callers wait until the reset time before issuing the next
    request. A clock and sleeper are injectable for tests.
    """

    def __init__(
        self,
        sleeper: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.time,
    ):
        self._lock = threading.Lock()
        self._sleeper = sleeper
        self._clock = clock
        self.remaining: int | None = None
        self.reset_at: float | None = None

    def wait_for_budget(self) -> None:
        while True:
            with self._lock:
                if self.remaining is None or self.remaining > 0:
                    return
                if self.reset_at is None:
                    return
                wait = self.reset_at - self._clock()
                if wait <= 0:
                    self.remaining = None  # window rolled over
                    return
            self._sleeper(wait)

    def observe(self, headers) -> None:
        remaining = headers.get("X-RateLimit-Remaining")
        reset = headers.get("X-RateLimit-Reset")
        with self._lock:
            if remaining is not None:
                self.remaining = int(remaining)
            if reset is not None:
                self.reset_at = float(reset)


class GitHubClient:
    """Thin REST client with retry, backoff, and rate-limit pausing.

    ``session`` and ``sleeper`` are injectable for tests; without a session a
    per-thread ``requests.Session`` is used so worker threads never share one.
    All threads share one rate-limit governor.
    """

    def __init__(
        self,
        token: str | None = None,
        session=None,
        base_url: str = GITHUB_API,
        sleeper: Callable[[float], None] = time.sleep,
        max_retries: int = 4,
        timeout: float = 30.0,
        governor: RateLimitGovernor | None = None,
    ):
        self.token = token if token is not None else os.environ.get("GITHUB_TOKEN")
        self.base_url = base_url.rstrip("/")
        self._session = session
        self._local = threading.local()
        self._sleeper = sleeper
        self._max_retries = max_retries
        self._timeout = timeout
        self.governor = governor if governor is not None else RateLimitGovernor(sleeper=sleeper)

    def _headers(self) -> dict[str, str]:
        headers = {
            "Accept": "application/vnd.github+json",
            "X-GitHub-Api-Version": "2022-11-28",
            "User-Agent": "issuetriage",
        }
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def _get_session(self):
        if self._session is not None:
            return self._session
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def _get(self, path: str, params: dict | None = None):
        """GET with bounded exponential backoff on transient failures."""
        url = self.base_url + path
        delay = 0.5
        last_error: Exception | None = None
        for attempt in range(self._max_retries):
            self.governor.wait_for_budget()
            try:
                response = self._get_session().get(
                    url, params=params, headers=self._headers(), timeout=self._timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                self._sleeper(delay)
                delay *= 2
                continue
            self.governor.observe(response.headers)
            if response.status_code in _TRANSIENT_STATUSES:
                last_error = GitHubError(
                    f"GET {path} -> {response.status_code}", status=response.status_code
                )
                self._sleeper(delay)
                delay *= 2
                continue
            self._raise_for_status(path, response)
            return response
        raise NetworkError(f"GET {path} failed after {self._max_retries} attempts: {last_error}")

    @staticmethod
    def _raise_for_status(path: str, response) -> None:
        status = response.status_code
        if status < 400:
            return
        if status == 401:
            raise AuthError(f"GET {path}: authentication failed", status=status)
        if status == 404:
            raise NotFoundError(f"GET {path}: not found", status=status)
        if status in (403, 429):
            headers = response.headers
            remaining = headers.get("X-RateLimit-Remaining")
            retry_after = headers.get("Retry-After")
            if retry_after is not None or remaining == "0":
                if retry_after is not None:
                    wait = float(retry_after)
                else:
                    reset = float(headers.get("X-RateLimit-Reset", time.time() + 60))
                    wait = max(0.0, reset - time.time())
                raise RateLimitError(
                    f"GET {path}: rate limit exhausted, retry after {wait:.0f}s",
                    retry_after=wait,
                    status=status,
                )
            raise AuthError(f"GET {path}: forbidden", status=status)
        raise GitHubError(f"GET {path} -> {status}", status=status)

    # ------------------------------------------------------------------
    # Endpoints
    # ------------------------------------------------------------------

    def fetch_top_repositories(self, language: str, count: int) -> list[RepoRef]:
        """Up to `count` repositories of `language`, by descending stars.

        An unknown language just yields an empty list. Rate-limit exhaustion
        raises RateLimitError carrying the retry-after delay.
        """
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        repos: list[RepoRef] = []
        page = 1
        per_page = min(100, count)
        while len(repos) < count:
            response = self._get(
                "/search/repositories",
                params={
                    "q": f'language:"{language}"',
                    "sort": "stars",
                    "order": "desc",
                    "per_page": per_page,
                    "page": page,
                },
            )
            payload = response.json()
            items = payload.get("items", [])
            if not items:
                break
            for item in items:
                repos.append(
                    RepoRef(
                        owner=item["owner"]["login"],
                        name=item["name"],
                        primary_language=item.get("language") or language,
                        star_count=int(item.get("stargazers_count", 0)),
                    )
                )
                if len(repos) == count:
                    break
            if len(items) < per_page:
                break
            page += 1
            if (page - 1) * per_page >= 1000:  # search API result window cap
                break
        return repos

    def iter_issues(
        self, repo: RepoRef, page_size: int = 100, state: str = "all"
    ) -> Iterator[IssueRecord]:
        """Every issue of `repo` (open and closed), pull requests tagged.

        Paginates until exhaustion; a rate-limit response pauses and retries
        the same page, so pages are never dropped.
        """
        if page_size < 1:
            raise ValueError(f"page_size must be >= 1, got {page_size}")
        page = 1
        while True:
            try:
                response = self._get(
                    f"/repos/{repo.owner}/{repo.name}/issues",
                    params={
                        "state": state,
                        "per_page": page_size,
                        "page": page,
                        "direction": "asc",
                    },
                )
            except RateLimitError as exc:
                self._sleeper(exc.retry_after)
                continue
            items = response.json()
            for item in items:
                yield _issue_from_api(repo, item)
            if len(items) < page_size:
                return
            page += 1


def _issue_from_api(repo: RepoRef, item: dict) -> IssueRecord:
    labels = tuple(
        label["name"] if isinstance(label, dict) else str(label)
        for label in item.get("labels", [])
    )
    return IssueRecord(
        repo=repo,
        issue_number=int(item["number"]),
        title=item.get("title") or "",
        body=item.get("body") or "",
        raw_labels=labels,
        created_at=_parse_ts(item["created_at"]),
        is_pull_request="pull_request" in item,
    )


# ---------------------------------------------------------------------------
# Archive
# ---------------------------------------------------------------------------


def _record_to_row(record: IssueRecord) -> dict:
    return {
        "owner": record.repo.owner,
        "repo": record.repo.name,
        "number": record.issue_number,
        "title": record.title,
        "body": record.body,
        "labels": list(record.raw_labels),
        "created_at": _format_ts(record.created_at),
        "is_pull_request": record.is_pull_request,
        "language": record.repo.primary_language,
        "stars": record.repo.star_count,
    }


def _record_from_row(row: dict) -> IssueRecord:
    return IssueRecord(
        repo=RepoRef(
            owner=row["owner"],
            name=row["repo"],
            primary_language=row.get("language", ""),
            star_count=int(row.get("stars", 0)),
        ),
        issue_number=int(row["number"]),
        title=row["title"],
        body=row["body"],
        raw_labels=tuple(row["labels"]),
        created_at=_parse_ts(row["created_at"]),
        is_pull_request=bool(row["is_pull_request"]),
    )


def _validate_record(record: IssueRecord, position: int) -> None:
    problems = []
    if not isinstance(record.title, str) or not isinstance(record.body, str):
        problems.append("title and body must be strings")
    if record.issue_number < 1:
        problems.append(f"issue_number must be positive, got {record.issue_number}")
    if not all(isinstance(label, str) for label in record.raw_labels):
        problems.append("labels must all be strings")
    if record.created_at.tzinfo is None:
        problems.append("created_at must be timezone-aware")
    if problems:
        raise ArchiveError(f"record {position}: " + "; ".join(problems))


class ArchiveWriter:
    """Single-writer append handle with (repo, issue_number) deduplication."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._seen: set[tuple[str, str, int]] = set()
        self._counts: dict[str, int] = {}
        self._written = 0
        self._existing = 0
        if self.path.exists():
            for record in read_archive(self.path):
                self._seen.add(record.key())
                self._existing += 1
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("a", encoding="utf-8")

    def write(self, record: IssueRecord, position: int | None = None) -> bool:
        _validate_record(record, position if position is not None else self._written + 1)
        key = record.key()
        if key in self._seen:
            return False
        self._seen.add(key)
        self._handle.write(json.dumps(_record_to_row(record), ensure_ascii=False) + "\n")
        self._written += 1
        full = record.repo.full_name
        self._counts[full] = self._counts.get(full, 0) + 1
        return True

    def close(self) -> None:
        self._handle.close()

    @property
    def written(self) -> int:
        return self._written

    @property
    def counts(self) -> dict[str, int]:
        return dict(self._counts)

    @property
    def archive_total(self) -> int:
        return self._existing + self._written

    def __enter__(self) -> "ArchiveWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def write_archive(
    records: Iterable[IssueRecord],
    path: str | Path,
    *,
    languages: Iterable[str] = (),
    repos_per_language: int = 0,
) -> IngestionManifest:
    """Append records to the archive (deduplicated) and report what happened."""
    started = datetime.now(timezone.utc)
    with ArchiveWriter(path) as writer:
        for position, record in enumerate(records, start=1):
            writer.write(record, position)
        return IngestionManifest(
            languages=list(languages),
            repos_per_language=repos_per_language,
            fetched_counts=writer.counts,
            started_at=started,
            finished_at=datetime.now(timezone.utc),
            total_written=writer.written,
            archive_total=writer.archive_total,
        )


def read_archive(path: str | Path) -> Iterator[IssueRecord]:
    """Stream records back; the inverse of write_archive."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"archive not found: {path}")
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield _record_from_row(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ArchiveError(f"{path}: line {lineno}: {exc}") from exc


def fetch_corpus(
    client: GitHubClient,
    languages: Iterable[str],
    repos_per_language: int,
    out_path: str | Path,
    page_size: int = 100,
    max_workers: int = 4,
    progress: Callable[[str], None] | None = None,
) -> IngestionManifest:
    """Search top repositories per language and archive all their issues.

    Per-repository fetches run concurrently up to ``max_workers``; archive
    writing stays single-writer in the calling thread.
    """
    started = datetime.now(timezone.utc)
    say = progress or (lambda _msg: None)
    languages = list(languages)
    repos: list[RepoRef] = []
    for language in languages:
        found = client.fetch_top_repositories(language, repos_per_language)
        say(f"{language}: {len(found)} repositories")
        repos.extend(found)

    with ArchiveWriter(out_path) as writer:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {
                pool.submit(lambda r=repo: list(client.iter_issues(r, page_size))): repo
                for repo in repos
            }
            for future in as_completed(futures):
                repo = futures[future]
                for record in future.result():
                    writer.write(record)
                say(f"{repo.full_name}: archived")
        return IngestionManifest(
            languages=languages,
            repos_per_language=repos_per_language,
            fetched_counts=writer.counts,
            started_at=started,
            finished_at=datetime.now(timezone.utc),
            total_written=writer.written,
            archive_total=writer.archive_total,
        )
