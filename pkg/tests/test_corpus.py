"""Corpus preparation: label normalization, example construction, splitting,
oversampling, and the prepared-corpus file format."""

from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issuetriage.corpus import (
    ExampleSource,
    LabeledExample,
    corpus_fingerprint,
    label_counts,
    make_example,
    normalize_labels,
    oversample_minority,
    prepare_text,
    read_corpus_split,
    read_examples,
    split_corpus,
    subsample,
    write_corpus_split,
)
from issuetriage.errors import CorpusError, DataError
from issuetriage.ingestion import IssueRecord, RepoRef
from issuetriage.labels import LabelVector

REPO = RepoRef("acme", "widget")


def issue(number=1, title="the app crashes when saving", body="it fails with an error every time",
          labels=("bug",), pull=False):
    return IssueRecord(
        repo=REPO,
        issue_number=number,
        title=title,
        body=body,
        raw_labels=tuple(labels),
        created_at=datetime(2021, 5, 1, tzinfo=timezone.utc),
        is_pull_request=pull,
    )


def example(text="some text", labels=(1, 0, 0), number=1):
    return LabeledExample(
        text=text,
        labels=LabelVector.from_tuple(labels),
        source=ExampleSource("acme", "widget", number),
    )


# ---------------------------------------------------------------------------
# normalize_labels
# ---------------------------------------------------------------------------


def test_normalize_exact_matches():
    assert normalize_labels(["bug", "enhancement"]).as_tuple() == (1, 1, 0)
    assert normalize_labels(["not-a-bug"]).as_tuple() == (0, 0, 0)
    assert normalize_labels([]).as_tuple() == (0, 0, 0)
    assert normalize_labels(["  Bug ", "QUESTION"]).as_tuple() == (1, 0, 1)


def test_normalize_superstrings_never_match():
    for raw in ("bug-report", "bugfix", "a bug", "enhancement!", "question?"):
        assert normalize_labels([raw]).as_tuple() == (0, 0, 0), raw


@settings(max_examples=300)
@given(st.text(max_size=30))
def test_normalize_fuzzed_strings(raw):
    canonical = raw.strip().casefold()
    expected = tuple(1 if canonical == label else 0 for label in ("bug", "enhancement", "question"))
    assert normalize_labels([raw]).as_tuple() == expected


# ---------------------------------------------------------------------------
# make_example
# ---------------------------------------------------------------------------


def test_make_example_happy_path_multi_label():
    record = issue(labels=("Bug", "enhancement"))
    result = make_example(record)
    assert result is not None
    assert result.labels.as_tuple() == (1, 1, 0)
    assert result.text == result.text.lower()
    assert result.source == ExampleSource("acme", "widget", 1)
    # one example with two slots, never two examples
    assert isinstance(result, LabeledExample)


def test_make_example_drops_pull_requests():
    assert make_example(issue(pull=True)) is None


def test_make_example_drops_out_of_scope_labels():
    assert make_example(issue(labels=("wontfix",))) is None


def test_make_example_drops_non_english():
    record = issue(
        title="le bouton ne fonctionne pas",
        body="l'application plante au démarrage et je ne peux pas l'ouvrir",
    )
    assert make_example(record) is None


def test_make_example_empty_body_uses_title_only():
    record = issue(title="HOW does the Parser work here", body="", labels=("question",))
    result = make_example(record)
    assert result is not None
    assert result.text == "how does the parser work here"


def test_prepare_text_joins_with_single_newline():
    assert prepare_text("Title Here", "Body there") == "title here\nbody there"
    assert prepare_text("Title", "") == "title"
    assert prepare_text("", "Body") == "body"


def test_build_examples_counts(planted_split):
    # the session corpus was built through build_examples; sanity only
    assert all(ex.text == ex.text.lower() for ex in planted_split.train)
    assert all(ex.labels.any() for ex in planted_split.train)


def test_lowercase_invariant_over_generated_corpus():
    from issuetriage.synthetic import planted_keyword_issues

    for record in planted_keyword_issues(50, seed=3):
        result = make_example(record)
        if result is not None:
            assert result.text == result.text.lower()


# ---------------------------------------------------------------------------
# split_corpus
# ---------------------------------------------------------------------------


def test_split_sizes():
    examples = [example(number=i) for i in range(1, 101)]
    split = split_corpus(examples, 0.8, seed=7)
    assert len(split.train) == 80
    assert len(split.test) == 20


def test_split_rounding_small():
    examples = [example(number=i) for i in range(1, 6)]
    split = split_corpus(examples, 0.8, seed=0)
    assert len(split.train) == 4
    assert len(split.test) == 1


def test_split_deterministic_and_disjoint():
    examples = [example(number=i) for i in range(1, 61)]
    a = split_corpus(examples, 0.75, seed=7)
    b = split_corpus(examples, 0.75, seed=7)
    assert [e.source for e in a.train] == [e.source for e in b.train]
    assert [e.source for e in a.test] == [e.source for e in b.test]
    train_sources = {e.source for e in a.train}
    test_sources = {e.source for e in a.test}
    assert not train_sources & test_sources
    assert len(train_sources | test_sources) == 60


def test_split_seed_changes_partition():
    examples = [example(number=i) for i in range(1, 61)]
    a = split_corpus(examples, 0.75, seed=7)
    b = split_corpus(examples, 0.75, seed=8)
    assert {e.source for e in a.train} != {e.source for e in b.train}


def test_split_validates_input():
    with pytest.raises(CorpusError):
        split_corpus([], 0.8, seed=1)
    with pytest.raises(CorpusError):
        split_corpus([example()], 1.0, seed=1)


# ---------------------------------------------------------------------------
# oversample_minority
# ---------------------------------------------------------------------------


def _train_with_counts(bug, enhancement, question):
    out = []
    number = 0
    for count, slots in ((bug, (1, 0, 0)), (enhancement, (0, 1, 0)), (question, (0, 0, 1))):
        for _ in range(count):
            number += 1
            out.append(example(text=f"text {number}", labels=slots, number=number))
    return out


def test_oversample_balances_counts():
    train = _train_with_counts(50, 40, 4)
    result, report = oversample_minority(train, seed=5)
    after = label_counts(result)
    assert after["bug"] >= 50 and after["enhancement"] >= 50 and after["question"] >= 50
    assert report["per_label"]["question"]["before"] == 4
    assert report["per_label"]["question"]["after"] >= 50
    # question originals duplicated roughly 12x
    question_copies = sum(1 for ex in result if ex.duplicated_from and ex.labels.question)
    assert 40 <= question_copies <= 52
    # originals all retained, in order, un-flagged
    assert result[: len(train)] == train
    assert all(ex.duplicated_from is not None for ex in result[len(train):])


def test_oversample_balanced_input_is_fixed_point():
    train = _train_with_counts(10, 10, 10)
    result, report = oversample_minority(train, seed=1)
    assert result == train
    assert report["duplicates_added"] == 0


def test_oversample_zero_positive_label_errors():
    train = _train_with_counts(10, 10, 0)
    with pytest.raises(CorpusError, match="question has no positive examples"):
        oversample_minority(train, seed=1)


def test_oversample_deterministic():
    train = _train_with_counts(12, 7, 3)
    a, _ = oversample_minority(train, seed=9)
    b, _ = oversample_minority(train, seed=9)
    assert a == b


def test_oversample_never_decreases_counts():
    train = _train_with_counts(9, 17, 5)
    before = label_counts(train)
    result, _ = oversample_minority(train, seed=2)
    after = label_counts(result)
    for label in before:
        assert after[label] >= before[label]


def test_oversample_multi_label_duplicates_count_for_all_their_labels():
    train = _train_with_counts(6, 6, 1)
    train.append(example(text="both", labels=(0, 1, 1), number=99))
    result, report = oversample_minority(train, seed=4)
    after = label_counts(result)
    target = report["target"]
    assert all(after[label] >= target for label in after)


# ---------------------------------------------------------------------------
# corpus files
# ---------------------------------------------------------------------------


def test_corpus_split_roundtrip(tmp_path, planted_split):
    manifest = write_corpus_split(planted_split, tmp_path / "corpus")
    loaded, manifest2 = read_corpus_split(tmp_path / "corpus")
    assert manifest2["fingerprint_test"] == manifest["fingerprint_test"]
    assert loaded.train == planted_split.train
    assert loaded.test == planted_split.test
    assert loaded.split_ratio == planted_split.split_ratio
    assert loaded.oversample_report == planted_split.oversample_report


def test_duplicated_from_survives_roundtrip(tmp_path):
    train = _train_with_counts(5, 5, 2)
    result, _ = oversample_minority(train, seed=0)
    split = split_corpus(result, 0.8, seed=1)
    write_corpus_split(split, tmp_path / "c")
    loaded, _ = read_corpus_split(tmp_path / "c")
    flagged = [ex for ex in loaded.train + loaded.test if ex.duplicated_from]
    assert flagged, "expected oversampled copies in the roundtrip"
    for ex in flagged:
        assert ex.duplicated_from == ex.source


def test_read_examples_reports_bad_line(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"text": "ok", "bug": 1, "enhancement": 0, "question": 0, '
                    '"owner": "a", "repo": "b", "number": 1, "duplicated_from": null}\n'
                    "garbage\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="line 2"):
        read_examples(path)


def test_read_corpus_split_missing_dir(tmp_path):
    with pytest.raises(DataError):
        read_corpus_split(tmp_path / "nope")


def test_fingerprint_changes_with_content():
    a = [example(text="one"), example(text="two", number=2)]
    b = [example(text="one"), example(text="three", number=2)]
    assert corpus_fingerprint(a) != corpus_fingerprint(b)
    assert corpus_fingerprint(a) == corpus_fingerprint(list(a))


def test_subsample_deterministic_and_bounded():
    examples = [example(number=i) for i in range(1, 41)]
    a = subsample(examples, 10, seed=3)
    b = subsample(examples, 10, seed=3)
    assert a == b
    assert len(a) == 10
    assert subsample(examples, 100, seed=3) == examples
    with pytest.raises(CorpusError):
        subsample(examples, 0, seed=3)
