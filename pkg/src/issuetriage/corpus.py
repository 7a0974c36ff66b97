"""Raw issue records -> clean multi-label dataset.

Covers label normalization (exact match after case-fold + trim), English
filtering, text preparation (title + newline + body, lowercased),
deterministic train/test splitting, and minority-label oversampling.
No stemming, stop-word removal, or lemmatization: markdown stays verbatim.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusError, DataError
from .ingestion import IssueRecord
from .labels import LABELS, LabelVector
from .language import LanguageDetector, detect_english

CORPUS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ExampleSource:
    """Where a corpus example came from: repository plus issue number."""

    owner: str
    repo: str
    number: int

    def __str__(self) -> str:
        return f"{self.owner}/{self.repo}#{self.number}"

    @classmethod
    def parse(cls, text: str) -> "ExampleSource":
        try:
            repo_part, number = text.rsplit("#", 1)
            owner, repo = repo_part.split("/", 1)
            return cls(owner=owner, repo=repo, number=int(number))
        except ValueError as exc:
            raise DataError(f"malformed example source {text!r}") from exc


@dataclass(frozen=True)
class LabeledExample:
    """Lowercased issue text plus its binary label vector.

    ``duplicated_from`` is set exactly when the example is an oversampled
    copy, and names the source it was duplicated from.
    """

    text: str
    labels: LabelVector
    source: ExampleSource
    duplicated_from: ExampleSource | None = None


@dataclass
class CorpusSplit:
    train: list[LabeledExample]
    test: list[LabeledExample]
    split_seed: int
    split_ratio: float
    oversample_report: dict | None = None


def normalize_labels(raw_labels: Iterable[str]) -> LabelVector:
    """Slot set iff a raw label equals "bug"/"enhancement"/"question" exactly
    after case-folding and whitespace-trimming. Superstrings never match."""
    normalized = {s.strip().casefold() for s in raw_labels}
    return LabelVector(*(1 if label in normalized else 0 for label in LABELS))


def prepare_raw_text(title: str, body: str) -> str:
    """Title and body joined by a single newline; empty parts dropped."""
    return "\n".join(part for part in (title, body) if part)


def prepare_text(title: str, body: str) -> str:
    """The exact text an example (and the webhook service) feeds the model."""
    return prepare_raw_text(title, body).lower()


def make_example(
    issue: IssueRecord, detector: LanguageDetector | None = None
) -> LabeledExample | None:
    """Turn one raw issue into a labeled example, or nothing.

    Drops pull requests, non-English text, and issues with no in-scope label.
    Language detection runs on the raw concatenation, before lowercasing.
    """
    if issue.is_pull_request:
        return None
    labels = normalize_labels(issue.raw_labels)
    if not labels.any():
        return None
    raw = prepare_raw_text(issue.title, issue.body)
    if not detect_english(raw, detector):
        return None
    return LabeledExample(
        text=raw.lower(),
        labels=labels,
        source=ExampleSource(issue.repo.owner, issue.repo.name, issue.issue_number),
    )


def build_examples(
    issues: Iterable[IssueRecord], detector: LanguageDetector | None = None
) -> list[LabeledExample]:
    out = []
    for issue in issues:
        example = make_example(issue, detector)
        if example is not None:
            out.append(example)
    return out


def subsample(
    examples: Sequence[LabeledExample], k: int, seed: int
) -> list[LabeledExample]:
    """Random subsample of k examples (all of them when k >= len)."""
    if k <= 0:
        raise CorpusError(f"subsample size must be positive, got {k}")
    if k >= len(examples):
        return list(examples)
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(examples), size=k, replace=False)
    return [examples[i] for i in sorted(picked)]


def split_corpus(
    examples: Sequence[LabeledExample], ratio: float, seed: int
) -> CorpusSplit:
    """Uniformly random train/test partition driven solely by the seed."""
    if not examples:
        raise CorpusError("cannot split an empty corpus")
    if not 0.0 < ratio < 1.0:
        raise CorpusError(f"split ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(examples))
    n_train = int(round(len(examples) * ratio))
    train = [examples[i] for i in order[:n_train]]
    test = [examples[i] for i in order[n_train:]]
    return CorpusSplit(train=train, test=test, split_seed=seed, split_ratio=ratio)


def label_counts(examples: Sequence[LabeledExample]) -> dict[str, int]:
    counts = dict.fromkeys(LABELS, 0)
    for example in examples:
        for label, slot in zip(LABELS, example.labels):
            counts[label] += slot
    return counts


def oversample_minority(
    train: Sequence[LabeledExample], seed: int
) -> tuple[list[LabeledExample], dict]:
    """Duplicate random positives of minority labels until every label's
    positive count reaches the maximum label's count.

    Originals are never removed; copies carry ``duplicated_from``. Counts may
    overshoot when a duplicated example carries several labels.
    """
    before = label_counts(train)
    for label, count in before.items():
        if count == 0:
            raise CorpusError(f"{label} has no positive examples")

    target = max(before.values())
    counts = dict(before)
    rng = np.random.default_rng(seed)
    result = list(train)
    pools = {
        label: [ex for ex in train if getattr(ex.labels, label)] for label in LABELS
    }
    for label in LABELS:
        pool = pools[label]
        while counts[label] < target:
            original = pool[int(rng.integers(len(pool)))]
            result.append(replace(original, duplicated_from=original.source))
            for name, slot in zip(LABELS, original.labels):
                counts[name] += slot
    report = {
        "target": target,
        "per_label": {
            label: {"before": before[label], "after": counts[label]}
            for label in LABELS
        },
        "duplicates_added": len(result) - len(train),
    }
    return result, report


# ---------------------------------------------------------------------------
# Prepared-corpus files
# ---------------------------------------------------------------------------


def _example_row(example: LabeledExample) -> dict:
    return {
        "text": example.text,
        "bug": example.labels.bug,
        "enhancement": example.labels.enhancement,
        "question": example.labels.question,
        "owner": example.source.owner,
        "repo": example.source.repo,
        "number": example.source.number,
        "duplicated_from": (
            str(example.duplicated_from) if example.duplicated_from else None
        ),
    }


def _example_from_row(row: dict) -> LabeledExample:
    duplicated = row.get("duplicated_from")
    return LabeledExample(
        text=row["text"],
        labels=LabelVector(int(row["bug"]), int(row["enhancement"]), int(row["question"])),
        source=ExampleSource(row["owner"], row["repo"], int(row["number"])),
        duplicated_from=ExampleSource.parse(duplicated) if duplicated else None,
    )


def _serialize_examples(examples: Sequence[LabeledExample]) -> str:
    return "".join(
        json.dumps(_example_row(ex), ensure_ascii=False, sort_keys=True) + "\n"
        for ex in examples
    )


def corpus_fingerprint(examples: Sequence[LabeledExample]) -> str:
    """Content hash identifying a set of examples (order-sensitive)."""
    return hashlib.sha256(_serialize_examples(examples).encode("utf-8")).hexdigest()


def write_corpus_split(split: CorpusSplit, directory: str | Path) -> dict:
    """Write train.jsonl, test.jsonl, and a corpus.json manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train_text = _serialize_examples(split.train)
    test_text = _serialize_examples(split.test)
    (directory / "train.jsonl").write_text(train_text, encoding="utf-8")
    (directory / "test.jsonl").write_text(test_text, encoding="utf-8")
    manifest = {
        "format_version": CORPUS_FORMAT_VERSION,
        "split_seed": split.split_seed,
        "split_ratio": split.split_ratio,
        "n_train": len(split.train),
        "n_test": len(split.test),
        "oversample_report": split.oversample_report,
        "fingerprint_train": hashlib.sha256(train_text.encode("utf-8")).hexdigest(),
        "fingerprint_test": hashlib.sha256(test_text.encode("utf-8")).hexdigest(),
    }
    (directory / "corpus.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def read_examples(path: str | Path) -> list[LabeledExample]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    examples = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                examples.append(_example_from_row(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from exc
    return examples


def read_corpus_split(directory: str | Path) -> tuple[CorpusSplit, dict]:
    directory = Path(directory)
    manifest_path = directory / "corpus.json"
    if not manifest_path.exists():
        raise DataError(f"not a prepared corpus (missing corpus.json): {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version", 0) > CORPUS_FORMAT_VERSION:
        raise DataError(
            f"corpus format version {manifest.get('format_version')} is newer than "
            f"supported version {CORPUS_FORMAT_VERSION}"
        )
    split = CorpusSplit(
        train=read_examples(directory / "train.jsonl"),
        test=read_examples(directory / "test.jsonl"),
        split_seed=int(manifest["split_seed"]),
        split_ratio=float(manifest["split_ratio"]),
        oversample_report=manifest.get("oversample_report"),
    )
    return split, manifest
