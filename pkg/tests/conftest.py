"""Shared fixtures: a small planted-keyword corpus and a classifier trained
on it once per session (the service, CLI, and acceptance tests reuse it)."""

from __future__ import annotations

import pytest

from issuetriage.classifier import TrainingConfig, fine_tune
from issuetriage.corpus import build_examples, oversample_minority, split_corpus
from issuetriage.synthetic import planted_keyword_issues

FIXTURE_SEED = 20210301


@pytest.fixture(scope="session")
def planted_split():
    issues = planted_keyword_issues(360, seed=99, noise_rate=0.15)
    examples = build_examples(issues)[:300]
    split = split_corpus(examples, 0.8, seed=7)
    split.train, split.oversample_report = oversample_minority(split.train, seed=7)
    return split


@pytest.fixture(scope="session")
def tiny_training_config():
    return TrainingConfig(
        epochs=3,
        learning_rate=3e-3,
        max_sequence_length=48,
        batch_size=8,
        base_encoder="tiny-english",
        seed=0,
    )


@pytest.fixture(scope="session")
def planted_artifact(planted_split, tiny_training_config):
    return fine_tune(planted_split.train, tiny_training_config)
