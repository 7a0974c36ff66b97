"""Traditional keyword baseline: tf-idf bag-of-words features with one
independent regularized logistic classifier per label.

This is the comparison point for the contextual classifier. By construction
it only sees token occurrence counts: permuting the words of an input can
never change its output (features are accumulated per token and emitted in
canonical index order, so even the floating-point result is identical).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DataError, VersionError
from .labels import LABELS, Prediction, make_prediction
from .corpus import LabeledExample

BASELINE_FORMAT_VERSION = 1
TOKENIZER_RULE = "lowercase; split on non-alphanumeric runs; drop tokens shorter than 2 characters"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2]


@dataclass(frozen=True)
class BaselineConfig:
    min_token_freq: int = 2
    seed: int = 0
    iterations: int = 2000
    learning_rate: float = 2.0
    l2: float = 1e-4

    def __post_init__(self) -> None:
        if self.min_token_freq < 1:
            raise ValueError(f"min_token_freq must be positive, got {self.min_token_freq}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be positive, got {self.iterations}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be non-negative, got {self.l2}")


@dataclass
class BaselineArtifact:
    """Vocabulary with idf weights plus per-label linear weights and bias."""

    vocabulary: dict[str, int]
    idf: np.ndarray  # (vocab,)
    weights: np.ndarray  # (3, vocab)
    bias: np.ndarray  # (3,)
    config: BaselineConfig
    tokenizer_rule: str = TOKENIZER_RULE
    version_tag: str = ""


def _featurize(
    tokens: Sequence[str], vocabulary: dict[str, int], idf: np.ndarray
) -> tuple[list[int], list[float]]:
    """Canonical sparse tf-idf row: indices ascending, L2-normalized values.

    Unknown tokens are dropped; they contribute nothing.
    """
    counts: Counter[int] = Counter()
    for token in tokens:
        index = vocabulary.get(token)
        if index is not None:
            counts[index] += 1
    if not counts:
        return [], []
    indices = sorted(counts)
    values = [counts[i] * float(idf[i]) for i in indices]
    norm = math.sqrt(sum(v * v for v in values))
    values = [v / norm for v in values]
    return indices, values


def train_baseline(
    train: Sequence[LabeledExample], config: BaselineConfig | None = None
) -> BaselineArtifact:
    """Fit the one-vs-rest tf-idf logistic baseline.

    Deterministic: zero initialization and full-batch gradient descent, so
    two runs with the same inputs produce identical weights.
    """
    config = config or BaselineConfig()
    if not train:
        raise DataError("training set is empty")
    n = len(train)
    for slot, label in enumerate(LABELS):
        positives = sum(ex.labels.as_tuple()[slot] for ex in train)
        if positives == 0:
            raise DataError(f"label {label} is degenerate: no positive examples")
        if positives == n:
            raise DataError(f"label {label} is degenerate: no negative examples")

    docs = [tokenize(ex.text) for ex in train]
    document_freq: Counter[str] = Counter()
    for doc in docs:
        document_freq.update(set(doc))
    vocab_tokens = sorted(
        token for token, freq in document_freq.items() if freq >= config.min_token_freq
    )
    if not vocab_tokens:
        raise DataError(
            f"vocabulary is empty at min_token_freq={config.min_token_freq}"
        )
    vocabulary = {token: i for i, token in enumerate(vocab_tokens)}
    dim = len(vocabulary)
    idf = np.array(
        [
            math.log((1 + n) / (1 + document_freq[token])) + 1.0
            for token in vocab_tokens
        ],
        dtype=np.float64,
    )

    indptr = np.zeros(n + 1, dtype=np.int64)
    all_indices: list[int] = []
    all_values: list[float] = []
    for row, doc in enumerate(docs):
        indices, values = _featurize(doc, vocabulary, idf)
        all_indices.extend(indices)
        all_values.extend(values)
        indptr[row + 1] = len(all_indices)
    indices_arr = np.array(all_indices, dtype=np.int64)
    values_arr = np.array(all_values, dtype=np.float64)

    weights = np.zeros((len(LABELS), dim), dtype=np.float64)
    bias = np.zeros(len(LABELS), dtype=np.float64)
    for slot in range(len(LABELS)):
        y = np.array([ex.labels.as_tuple()[slot] for ex in train], dtype=np.float64)
        w = weights[slot]
        b = 0.0
        for _ in range(config.iterations):
            scores = kernels.csr_matvec(indptr, indices_arr, values_arr, w) + b
            residual = (1.0 / (1.0 + np.exp(-scores)) - y) / n
            grad_w = kernels.csr_rmatvec(indptr, indices_arr, values_arr, residual, dim)
            grad_w += config.l2 * w
            w -= config.learning_rate * grad_w
            b -= config.learning_rate * float(residual.sum())
        bias[slot] = b

    digest = hashlib.sha256()
    digest.update(weights.tobytes())
    digest.update(bias.tobytes())
    digest.update(idf.tobytes())
    return BaselineArtifact(
        vocabulary=vocabulary,
        idf=idf,
        weights=weights,
        bias=bias,
        config=config,
        version_tag="b-" + digest.hexdigest()[:12],
    )


def predict_baseline(artifact: BaselineArtifact, text: str) -> Prediction:
    """Per-label logistic probabilities, thresholded at 0.5.

    Out-of-vocabulary text falls back to the bias-only outputs.
    """
    if not text or not text.strip():
        raise DataError("cannot predict on empty text")
    indices, values = _featurize(tokenize(text), artifact.vocabulary, artifact.idf)
    scores = artifact.bias.copy()
    for index, value in zip(indices, values):
        scores += artifact.weights[:, index] * value
    probs = 1.0 / (1.0 + np.exp(-scores))
    return make_prediction(probs, 0.5)


def predict_baseline_batch(
    artifact: BaselineArtifact, texts: Sequence[str]
) -> list[Prediction]:
    return [predict_baseline(artifact, text) for text in texts]


# ---------------------------------------------------------------------------
# Persistence: one serialized record
# ---------------------------------------------------------------------------


def save_baseline(artifact: BaselineArtifact, path: str | Path) -> None:
    path = Path(path)
    if path.suffix != ".json":
        path.mkdir(parents=True, exist_ok=True)
        path = path / "baseline.json"
    record = {
        "format_version": BASELINE_FORMAT_VERSION,
        "kind": "tfidf-logistic-baseline",
        "labels": list(LABELS),
        "tokenizer_rule": artifact.tokenizer_rule,
        "config": asdict(artifact.config),
        "vocabulary": artifact.vocabulary,
        "idf": artifact.idf.tolist(),
        "weights": artifact.weights.tolist(),
        "bias": artifact.bias.tolist(),
        "version_tag": artifact.version_tag,
    }
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")


def load_baseline(path: str | Path) -> BaselineArtifact:
    path = Path(path)
    if path.is_dir():
        path = path / "baseline.json"
    if not path.exists():
        raise DataError(f"baseline artifact not found: {path}")
    record = json.loads(path.read_text(encoding="utf-8"))
    version = record.get("format_version", 0)
    if version > BASELINE_FORMAT_VERSION:
        raise VersionError(
            f"baseline format version {version} is newer than supported "
            f"version {BASELINE_FORMAT_VERSION}"
        )
    return BaselineArtifact(
        vocabulary={str(k): int(v) for k, v in record["vocabulary"].items()},
        idf=np.array(record["idf"], dtype=np.float64),
        weights=np.array(record["weights"], dtype=np.float64),
        bias=np.array(record["bias"], dtype=np.float64),
        config=BaselineConfig(**record["config"]),
        tokenizer_rule=record.get("tokenizer_rule", TOKENIZER_RULE),
        version_tag=record.get("version_tag", ""),
    )
