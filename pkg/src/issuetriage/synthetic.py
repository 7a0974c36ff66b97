"""Deterministic synthetic corpora for tests, fixtures, and benchmarks.

Three generators:

* ``planted_keyword_issues``: raw issue records whose labels follow planted
  vocabulary (crash/fail -> bug, add/support -> enhancement, how/why ->
  question), with a multi-label share and optional noise records (pull
  requests, non-English text, unlabeled and off-scope labels) so the full
  preparation pipeline has something to filter.
* ``negation_context_examples``: labels depend on word order and negation
  ("not a bug, please add ..." is enhancement only), with unigram
  distributions kept deliberately uninformative for the bug label. A
  bag-of-words model cannot separate what a context-aware model can.
* ``pretraining_texts``: generic English-ish sentences for masked-token
  pretraining of the bundled tiny encoder.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np

from .corpus import ExampleSource, LabeledExample
from .ingestion import IssueRecord, RepoRef
from .labels import LabelVector

BUG_WORDS = ("crashes", "fails", "breaks", "error", "exception", "freezes")
ENHANCEMENT_WORDS = ("add", "support", "improve", "option", "feature", "allow")
QUESTION_WORDS = ("how", "why", "what", "help", "possible", "where")

_NOUNS = (
    "button", "page", "editor", "dialog", "toolbar", "parser", "installer",
    "theme", "sidebar", "preview", "window", "menu", "file", "server", "cache",
)
_VERBS = (
    "open", "close", "render", "load", "save", "resize", "scroll", "update",
    "export", "import", "restart", "refresh",
)
_FILLER = (
    "the app is slow today", "i am using the latest version",
    "this happens on my machine", "the team is aware of the setup",
    "we run it on a small server", "it worked before the update",
    "the logs are attached below", "the settings are all default",
)

_FRENCH_BODIES = (
    "l'application plante au démarrage et je ne peux pas l'ouvrir",
    "le bouton ne fonctionne pas quand je clique dessus",
    "la page ne se charge pas après la mise à jour",
)


def _pick(rng: np.random.Generator, pool):
    return pool[int(rng.integers(len(pool)))]


def _base_time() -> datetime:
    return datetime(2021, 3, 1, tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# Planted-keyword raw issues
# ---------------------------------------------------------------------------


def _keyword_sentence(rng: np.random.Generator, label: str) -> str:
    noun, verb = _pick(rng, _NOUNS), _pick(rng, _VERBS)
    if label == "bug":
        word, word2 = _pick(rng, BUG_WORDS), _pick(rng, BUG_WORDS)
        forms = (
            f"the {noun} {word} with an {word2} when i {verb} it",
            f"there is an {word} in the {noun} , it {word2} after i {verb}",
            f"the {noun} always {word} on {verb} , another {word2} again",
        )
    elif label == "enhancement":
        word, word2 = _pick(rng, ENHANCEMENT_WORDS), _pick(rng, ENHANCEMENT_WORDS)
        forms = (
            f"please {word} a way to {verb} the {noun} and {word2} it",
            f"it would be nice to {word} and {word2} the {noun}",
            f"can you {word} the {noun} so it can {verb} , and {word2} it",
        )
    else:
        word, word2 = _pick(rng, QUESTION_WORDS), _pick(rng, QUESTION_WORDS)
        forms = (
            f"{word} do i {verb} the {noun} and {word2} is it slow",
            f"{word} is the {noun} slow when i {verb} , {word2} is that",
            f"{word} does the {noun} {verb} like that , {word2} even",
        )
    return str(_pick(rng, forms))


def planted_keyword_issues(
    n: int,
    seed: int,
    *,
    multi_label_rate: float = 0.2,
    noise_rate: float = 0.0,
    repo: RepoRef | None = None,
) -> list[IssueRecord]:
    """Raw issues whose labels are recoverable from planted vocabulary.

    ``noise_rate`` adds records the corpus pipeline must drop: pull requests,
    French text, unlabeled issues, and off-scope label strings.
    """
    rng = np.random.default_rng(seed)
    repo = repo or RepoRef("acme", "widget", primary_language="python", star_count=321)
    records: list[IssueRecord] = []
    start = _base_time()
    for i in range(n):
        number = i + 1
        created = start + timedelta(hours=i)
        roll = rng.random()
        if roll < noise_rate:
            records.append(_noise_issue(rng, repo, number, created))
            continue
        if rng.random() < multi_label_rate:
            labels = sorted(
                rng.choice(["bug", "enhancement", "question"], size=2, replace=False)
            )
        else:
            labels = [str(_pick(rng, ("bug", "enhancement", "question")))]
        sentences = [_keyword_sentence(rng, label) for label in labels]
        title = sentences[0]
        body = " ".join([str(_pick(rng, _FILLER))] + sentences[1:] + [str(_pick(rng, _FILLER))])
        raw_labels = [_vary_case(rng, label) for label in labels]
        if rng.random() < 0.3:
            raw_labels.append(str(_pick(rng, ("wontfix", "help wanted", "not-a-bug", "priority: high"))))
        records.append(
            IssueRecord(
                repo=repo,
                issue_number=number,
                title=title,
                body=body,
                raw_labels=tuple(raw_labels),
                created_at=created,
                is_pull_request=False,
            )
        )
    return records


def _vary_case(rng: np.random.Generator, label: str) -> str:
    roll = rng.random()
    if roll < 0.6:
        return label
    if roll < 0.8:
        return label.capitalize()
    return f" {label} "


def _noise_issue(
    rng: np.random.Generator, repo: RepoRef, number: int, created: datetime
) -> IssueRecord:
    kind = int(rng.integers(4))
    if kind == 0:  # pull request, still labeled
        return IssueRecord(
            repo=repo, issue_number=number,
            title=f"fix the {_pick(rng, _NOUNS)} handling",
            body="this pull request fixes the reported problem",
            raw_labels=("bug",), created_at=created, is_pull_request=True,
        )
    if kind == 1:  # non-English
        return IssueRecord(
            repo=repo, issue_number=number,
            title="le bouton ne fonctionne pas",
            body=str(_pick(rng, _FRENCH_BODIES)),
            raw_labels=("bug",), created_at=created, is_pull_request=False,
        )
    if kind == 2:  # unlabeled
        return IssueRecord(
            repo=repo, issue_number=number,
            title=f"the {_pick(rng, _NOUNS)} is acting strange",
            body="something is off but i am not sure what the problem is",
            raw_labels=(), created_at=created, is_pull_request=False,
        )
    return IssueRecord(  # labeled, but with off-scope strings only
        repo=repo, issue_number=number,
        title=f"notes about the {_pick(rng, _NOUNS)}",
        body="this is just a note for the team about the current setup",
        raw_labels=("not-a-bug", "bug-report", "documentation"),
        created_at=created, is_pull_request=False,
    )


# ---------------------------------------------------------------------------
# Word-order / negation corpus
# ---------------------------------------------------------------------------


# Bug and question templates come in anagram pairs: for each (noun, verb)
# draw, pair k's bug text and question text contain exactly the same token
# multiset, in a different order. A bag-of-words model therefore cannot
# separate the two; an order-aware model can (asserted vs negated "bug").
def _anagram_pair(rng: np.random.Generator) -> tuple[str, str]:
    noun = _pick(rng, _NOUNS)
    verb, verb2 = _pick(rng, _VERBS), _pick(rng, _VERBS)
    pairs = (
        (
            f"the {noun} does not {verb} , this is a bug",
            f"does the {noun} {verb} , this is not a bug",
        ),
        (
            f"there is a bug , the {noun} can not {verb}",
            f"there is not a bug , can the {noun} {verb}",
        ),
        (
            f"when i {verb} the {noun} it does not {verb2} , a bug",
            f"when i {verb} the {noun} does it {verb2} , not a bug",
        ),
    )
    return pairs[int(rng.integers(len(pairs)))]


def _enhancement_text(rng: np.random.Generator) -> str:
    noun, noun2 = _pick(rng, _NOUNS), _pick(rng, _NOUNS)
    verb = _pick(rng, _VERBS)
    forms = (
        f"please add an option to {verb} the {noun}",
        f"i want support for the {noun} , please improve the {noun2}",
        f"please improve the {noun} so i can {verb} it",
        f"not a bug , please add a way to {verb} the {noun}",
        f"this is not a bug , i want the {noun} to {verb}",
    )
    return str(_pick(rng, forms))


def negation_context_examples(n: int, seed: int) -> list[LabeledExample]:
    """Corpus where the bug label is decidable only from word order.

    Roughly 30% bug / 30% question drawn as token-identical anagram pairs,
    plus 40% enhancement requests (some phrased as negated bugs, per the
    "not a bug, please add ..." pattern).
    """
    rng = np.random.default_rng(seed)
    examples: list[LabeledExample] = []
    number = 0

    def add(text: str, vector: LabelVector) -> None:
        nonlocal number
        number += 1
        examples.append(
            LabeledExample(
                text=text,
                labels=vector,
                source=ExampleSource("acme", "contextual", number),
            )
        )

    while len(examples) < n:
        roll = rng.random()
        if roll < 0.6:
            bug_text, question_text = _anagram_pair(rng)
            add(bug_text, LabelVector(1, 0, 0))
            if len(examples) < n:
                add(question_text, LabelVector(0, 0, 1))
        else:
            add(_enhancement_text(rng), LabelVector(0, 1, 0))
    return examples


# ---------------------------------------------------------------------------
# Pretraining sentences
# ---------------------------------------------------------------------------

_PRETRAIN_SUBJECTS = (
    "the app", "the user", "the team", "the server", "my machine", "the editor",
    "the window", "the installer", "the new version", "the old build",
)
_PRETRAIN_TAILS = (
    "after the update", "on a small screen", "with default settings",
    "in the latest release", "when the cache is full", "during the import",
    "on every restart", "without any warning",
)


def pretraining_texts(n: int, seed: int) -> list[str]:
    """Issue-flavoured English sentences covering the planted vocabulary."""
    rng = np.random.default_rng(seed)
    keywords = BUG_WORDS + ENHANCEMENT_WORDS + QUESTION_WORDS
    texts: list[str] = []
    for _ in range(n):
        subject = _pick(rng, _PRETRAIN_SUBJECTS)
        verb = _pick(rng, _VERBS)
        noun = _pick(rng, _NOUNS)
        tail = _pick(rng, _PRETRAIN_TAILS)
        roll = rng.random()
        if roll < 0.35:
            word = _pick(rng, keywords)
            text = f"{subject} {word} the {noun} {tail}"
        elif roll < 0.6:
            text = f"{subject} can not {verb} the {noun} {tail}"
        elif roll < 0.8:
            text = f"{_pick(rng, QUESTION_WORDS)} does {subject} {verb} the {noun} {tail}"
        else:
            text = f"{subject} will {verb} the {noun} and the {_pick(rng, _NOUNS)} {tail}"
        texts.append(text)
    return texts
