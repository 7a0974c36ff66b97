"""Exception hierarchy shared across the toolkit.

The CLI maps the three top-level families onto distinct exit codes:
data errors exit 3, model errors exit 4, network errors exit 5.
"""

from __future__ import annotations


class IssueTriageError(Exception):
    """Base class for every error raised by this package."""


class DataError(IssueTriageError):
    """Bad, missing, or inconsistent input data."""


class ModelError(IssueTriageError):
    """Training, artifact, or inference failure."""


class NetworkError(IssueTriageError):
    """Remote API failure."""


class ArchiveError(DataError):
    """Malformed raw-issue archive content. Messages name the offending line."""


class CorpusError(DataError):
    """Invalid corpus contents or corpus-level preconditions violated."""


class FingerprintMismatch(DataError):
    """Two reports or artifacts do not refer to the same evaluation data."""


class ArtifactError(ModelError):
    """A persisted model artifact cannot be used."""


class ChecksumError(ArtifactError):
    """Stored checksum does not match the artifact payload."""


class VersionError(ArtifactError):
    """Artifact was written by an unsupported format version."""


class MissingEncoderError(ModelError):
    """Base encoder weights are not obtainable."""


class TrainingError(ModelError):
    """Training preconditions violated or the run itself failed."""


class GitHubError(NetworkError):
    """GitHub API returned an unrecoverable error."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class AuthError(GitHubError):
    """Credentials rejected."""


class NotFoundError(GitHubError):
    """Repository or issue does not exist (or is not readable)."""


class RateLimitError(GitHubError):
    """API budget exhausted; ``retry_after`` holds the wait in seconds."""

    def __init__(self, message: str, retry_after: float, status: int | None = 403):
        super().__init__(message, status=status)
        self.retry_after = retry_after
