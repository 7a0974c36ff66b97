"""Webhook auto-labeler: receives issue-opened events, predicts labels with a
loaded classifier artifact, and writes them back through the repository API.

Contract highlights:

* No unverified payload is parsed: the HMAC-SHA256 signature check runs on
  the raw request body and short-circuits with 401.
* Only ``issues``/``opened`` events trigger classification; everything else
  is acknowledged and skipped.
* Label writes are additive (the add-labels endpoint appends); pre-existing
  labels are never removed.
* Deliveries are idempotent: a replayed delivery id returns the recorded
  assignment and never mutates the repository twice. The delivery log is a
  bounded in-process store persisted to disk between restarts.
* The text fed to the model is exactly what corpus preparation would produce
  for the same title/body (shared code path).
"""

from __future__ import annotations

import hmac
import hashlib
import json
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol, Sequence

import requests

from . import __version__, kernels
from .classifier import ClassifierArtifact, predict
from .corpus import prepare_text
from .errors import AuthError, DataError, GitHubError, NotFoundError, RateLimitError
from .ingestion import GITHUB_API, RepoRef

OUTCOME_APPLIED = "applied"
OUTCOME_SKIPPED = "skipped"
OUTCOME_SKIPPED_NO_LABEL = "skipped_no_label"
OUTCOME_FAILED = "failed"


def verify_signature(raw_body: bytes, signature_header: str | None, secret: bytes) -> bool:
    """True iff the header carries the hex HMAC-SHA256 of the raw body.

    Comparison is constant-time; a missing or malformed header is False.
    """
    if not secret:
        raise ValueError("webhook secret is not configured")
    if not signature_header:
        return False
    expected = "sha256=" + hmac.new(secret, raw_body, hashlib.sha256).hexdigest()
    return hmac.compare_digest(signature_header, expected)


@dataclass(frozen=True)
class WebhookEvent:
    delivery_id: str
    event_type: str
    action: str
    repo: RepoRef
    issue_number: int
    title: str
    body: str
    sender: str = ""

    @property
    def actionable(self) -> bool:
        return self.event_type == "issues" and self.action == "opened"


def parse_event(event_type: str, delivery_id: str, payload: dict) -> WebhookEvent:
    """Build a WebhookEvent from a verified payload."""
    try:
        repository = payload["repository"]
        issue = payload["issue"]
        return WebhookEvent(
            delivery_id=delivery_id,
            event_type=event_type,
            action=payload.get("action", ""),
            repo=RepoRef(
                owner=repository["owner"]["login"],
                name=repository["name"],
            ),
            issue_number=int(issue["number"]),
            title=issue.get("title") or "",
            body=issue.get("body") or "",
            sender=(payload.get("sender") or {}).get("login", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed webhook payload: {exc}") from exc


@dataclass(frozen=True)
class LabelAssignment:
    repo: str
    issue_number: int
    assigned_labels: tuple[str, ...]
    probabilities: tuple[float, float, float] | None
    timestamp: str
    outcome: str
    detail: str = ""
    retry_after: float | None = None

    def __post_init__(self) -> None:
        if (self.outcome == OUTCOME_APPLIED) != bool(self.assigned_labels):
            raise ValueError(
                "assigned_labels must be non-empty exactly when outcome is applied"
            )

    def to_dict(self) -> dict:
        return {
            "repo": self.repo,
            "issue_number": self.issue_number,
            "assigned_labels": list(self.assigned_labels),
            "probabilities": list(self.probabilities) if self.probabilities else None,
            "timestamp": self.timestamp,
            "outcome": self.outcome,
            "detail": self.detail,
            "retry_after": self.retry_after,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LabelAssignment":
        return cls(
            repo=data["repo"],
            issue_number=int(data["issue_number"]),
            assigned_labels=tuple(data.get("assigned_labels") or ()),
            probabilities=tuple(data["probabilities"]) if data.get("probabilities") else None,
            timestamp=data.get("timestamp", ""),
            outcome=data["outcome"],
            detail=data.get("detail", ""),
            retry_after=data.get("retry_after"),
        )


class DeliveryLog:
    """Bounded delivery-id -> assignment store, persisted as JSON lines.

    Safe under concurrent access. On load only the newest ``capacity``
    entries are kept; the file is compacted when it grows well past that.
    """

    def __init__(self, path: str | Path | None = None, capacity: int = 4096):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.path = Path(path) if path is not None else None
        self.capacity = capacity
        self._lock = threading.Lock()
        self._entries: OrderedDict[str, LabelAssignment] = OrderedDict()
        self._file_lines = 0
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                self._entries[row["delivery_id"]] = LabelAssignment.from_dict(row["assignment"])
                self._file_lines += 1
            while len(self._entries) > capacity:
                self._entries.popitem(last=False)

    def seen(self, delivery_id: str) -> LabelAssignment | None:
        with self._lock:
            return self._entries.get(delivery_id)

    def record(self, delivery_id: str, assignment: LabelAssignment) -> None:
        with self._lock:
            self._entries[delivery_id] = assignment
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)
            if self.path is None:
                return
            line = json.dumps(
                {"delivery_id": delivery_id, "assignment": assignment.to_dict()}
            )
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
            self._file_lines += 1
            if self._file_lines > 2 * self.capacity:
                self._compact()

    def _compact(self) -> None:
        lines = [
            json.dumps({"delivery_id": did, "assignment": a.to_dict()})
            for did, a in self._entries.items()
        ]
        self.path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        self._file_lines = len(lines)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


class LabelApiClient(Protocol):
    def add_labels(self, owner: str, repo: str, number: int, labels: Sequence[str]) -> None:
        ...


class GitHubLabelClient:
    """Adds labels through the repository API (additive endpoint)."""

    def __init__(
        self,
        token: str | None = None,
        base_url: str = GITHUB_API,
        session=None,
        timeout: float = 30.0,
    ):
        self.token = token
        self.base_url = base_url.rstrip("/")
        self._session = session or requests.Session()
        self._timeout = timeout

    def add_labels(self, owner: str, repo: str, number: int, labels: Sequence[str]) -> None:
        if not labels:
            raise ValueError("labels must be non-empty")
        headers = {
            "Accept": "application/vnd.github+json",
            "X-GitHub-Api-Version": "2022-11-28",
            "User-Agent": "issuetriage",
        }
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        path = f"/repos/{owner}/{repo}/issues/{number}/labels"
        try:
            response = self._session.post(
                self.base_url + path,
                json={"labels": list(labels)},
                headers=headers,
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise GitHubError(f"POST {path} failed: {exc}") from exc
        status = response.status_code
        if status < 400:
            return
        if status == 401:
            raise AuthError(f"POST {path}: authentication failed", status=status)
        if status == 404:
            raise NotFoundError(f"POST {path}: issue not found", status=status)
        if status in (403, 429):
            retry_after = response.headers.get("Retry-After")
            if retry_after is not None or response.headers.get("X-RateLimit-Remaining") == "0":
                wait = float(retry_after) if retry_after is not None else 60.0
                raise RateLimitError(
                    f"POST {path}: rate limited", retry_after=wait, status=status
                )
            raise AuthError(f"POST {path}: forbidden (write access?)", status=status)
        if status == 422:
            raise GitHubError(f"POST {path}: validation failed", status=status)
        raise GitHubError(f"POST {path} -> {status}", status=status)


def apply_labels(
    api_client: LabelApiClient, repo: RepoRef, issue_number: int, labels: Sequence[str]
) -> None:
    """Add `labels` to the issue, preserving whatever is already on it."""
    if not labels:
        raise ValueError("labels must be non-empty")
    api_client.add_labels(repo.owner, repo.name, issue_number, list(labels))


def handle_event(
    event: WebhookEvent,
    artifact: ClassifierArtifact,
    api_client: LabelApiClient,
    dedup: DeliveryLog | None = None,
) -> LabelAssignment:
    """Classify an opened issue and push every label crossing the threshold.

    Assumes the payload signature was already verified. Replayed delivery ids
    return the recorded assignment without touching the API.
    """
    if dedup is not None:
        prior = dedup.seen(event.delivery_id)
        if prior is not None:
            return prior

    timestamp = datetime.now(timezone.utc).isoformat()
    repo_name = event.repo.full_name

    def finish(assignment: LabelAssignment) -> LabelAssignment:
        if dedup is not None:
            dedup.record(event.delivery_id, assignment)
        return assignment

    if not event.actionable:
        return finish(
            LabelAssignment(
                repo=repo_name,
                issue_number=event.issue_number,
                assigned_labels=(),
                probabilities=None,
                timestamp=timestamp,
                outcome=OUTCOME_SKIPPED,
                detail=f"ignored event {event.event_type}/{event.action}",
            )
        )

    text = prepare_text(event.title, event.body)
    if not text.strip():
        return finish(
            LabelAssignment(
                repo=repo_name,
                issue_number=event.issue_number,
                assigned_labels=(),
                probabilities=None,
                timestamp=timestamp,
                outcome=OUTCOME_SKIPPED_NO_LABEL,
                detail="issue has no text",
            )
        )

    prediction = predict(artifact, text)
    labels = prediction.labels.names()
    if not labels:
        return finish(
            LabelAssignment(
                repo=repo_name,
                issue_number=event.issue_number,
                assigned_labels=(),
                probabilities=prediction.probabilities,
                timestamp=timestamp,
                outcome=OUTCOME_SKIPPED_NO_LABEL,
                detail="no probability crossed the decision threshold",
            )
        )

    try:
        apply_labels(api_client, event.repo, event.issue_number, labels)
    except RateLimitError as exc:
        return finish(
            LabelAssignment(
                repo=repo_name,
                issue_number=event.issue_number,
                assigned_labels=(),
                probabilities=prediction.probabilities,
                timestamp=timestamp,
                outcome=OUTCOME_FAILED,
                detail=str(exc),
                retry_after=exc.retry_after,
            )
        )
    except GitHubError as exc:
        return finish(
            LabelAssignment(
                repo=repo_name,
                issue_number=event.issue_number,
                assigned_labels=(),
                probabilities=prediction.probabilities,
                timestamp=timestamp,
                outcome=OUTCOME_FAILED,
                detail=str(exc),
            )
        )

    return finish(
        LabelAssignment(
            repo=repo_name,
            issue_number=event.issue_number,
            assigned_labels=labels,
            probabilities=prediction.probabilities,
            timestamp=timestamp,
            outcome=OUTCOME_APPLIED,
        )
    )


class WebhookService:
    """Shared state for the HTTP app: artifact, API client, secret, dedup log,
    and a per-issue lock table so one issue is never labeled concurrently."""

    def __init__(
        self,
        artifact: ClassifierArtifact,
        api_client: LabelApiClient,
        secret: bytes,
        dedup: DeliveryLog | None = None,
    ):
        if not secret:
            raise ValueError("webhook secret must be configured (WEBHOOK_SECRET)")
        self.artifact = artifact
        self.api_client = api_client
        self.secret = secret
        self.dedup = dedup if dedup is not None else DeliveryLog()
        self.started_at = time.monotonic()
        self._locks_guard = threading.Lock()
        self._locks: dict[tuple[str, str, int], threading.Lock] = {}

    def _lock_for(self, event: WebhookEvent) -> threading.Lock:
        key = (event.repo.owner, event.repo.name, event.issue_number)
        with self._locks_guard:
            lock = self._locks.get(key)
            if lock is None:
                lock = threading.Lock()
                self._locks[key] = lock
            return lock

    def process(self, event: WebhookEvent) -> LabelAssignment:
        with self._lock_for(event):
            return handle_event(event, self.artifact, self.api_client, dedup=self.dedup)

    @property
    def uptime_seconds(self) -> float:
        return time.monotonic() - self.started_at


def create_app(service: WebhookService):
    """Starlette application exposing POST /webhook and GET /healthz."""
    from starlette.applications import Starlette
    from starlette.concurrency import run_in_threadpool
    from starlette.responses import JSONResponse, Response
    from starlette.routing import Route

    async def webhook(request):
        raw = await request.body()
        signature = request.headers.get("X-Hub-Signature-256")
        if not verify_signature(raw, signature, service.secret):
            return JSONResponse({"error": "signature verification failed"}, status_code=401)
        event_type = request.headers.get("X-GitHub-Event", "")
        delivery_id = request.headers.get("X-GitHub-Delivery", "")
        if event_type != "issues":
            return Response(status_code=204)
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError:
            return JSONResponse({"error": "payload is not valid JSON"}, status_code=400)
        if payload.get("action") != "opened":
            return Response(status_code=204)
        try:
            event = parse_event(event_type, delivery_id, payload)
        except DataError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        try:
            assignment = await run_in_threadpool(service.process, event)
        except Exception as exc:  # prediction/API failures must not kill the listener
            return JSONResponse({"error": str(exc)}, status_code=500)
        return JSONResponse(assignment.to_dict(), status_code=202)

    async def healthz(request):
        return JSONResponse(
            {
                "status": "ok",
                "service_version": __version__,
                "artifact_version": service.artifact.version_tag,
                "kernel_backend": kernels.BACKEND,
                "uptime_seconds": round(service.uptime_seconds, 3),
            }
        )

    return Starlette(
        routes=[
            Route("/webhook", webhook, methods=["POST"]),
            Route("/healthz", healthz, methods=["GET"]),
        ]
    )


def serve_forever(service: WebhookService, host: str, port: int) -> None:
    import uvicorn

    uvicorn.run(create_app(service), host=host, port=port, log_level="info")
