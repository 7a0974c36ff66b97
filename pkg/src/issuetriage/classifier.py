"""Fine-tune a pretrained bidirectional transformer encoder with a 3-way
multi-label head, and serve per-label probability predictions.

The base encoder is pluggable via ``TrainingConfig.base_encoder``: either a
registered pack name or a path to an encoder-pack directory (encoder.json +
tokenizer.json + weights.npz). The bundled ``tiny-english`` pack ships with
the package so training and tests run on a CPU in seconds; ``roberta-base``
is registered with the full 12-layer/768-hidden/12-head geometry for
full-scale runs but its pretrained weights must be supplied as a pack.

Labels come from independent sigmoid outputs trained with element-wise
binary cross-entropy; probabilities do not sum to 1.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import LabeledExample, corpus_fingerprint
from .encoder import (
    EncoderConfig,
    encoder_backward,
    encoder_forward,
    load_weights,
    save_weights,
)
from .errors import (
    ArtifactError,
    ChecksumError,
    DataError,
    MissingEncoderError,
    TrainingError,
    VersionError,
)
from .labels import LABELS, Prediction, make_prediction
from .tokenizer import BpeTokenizer
from .training import AdamW, bce_with_logits, encode_batch, sigmoid

ARTIFACT_FORMAT_VERSION = 1
TINY_ENCODER = "tiny-english"

# The paper-scale geometry; registered so full-scale configs resolve, but the
# pretrained weights are far too large to bundle and must come from a pack.
ROBERTA_BASE_CONFIG = EncoderConfig(
    vocab_size=50265,
    dim=768,
    n_layers=12,
    n_heads=12,
    ff_dim=3072,
    max_positions=514,
)

@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 5
    learning_rate: float = 4e-5
    max_sequence_length: int = 128
    batch_size: int = 8
    base_encoder: str = "roberta-base"
    seed: int = 0
    decision_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_sequence_length < 1:
            raise ValueError(
                f"max_sequence_length must be positive, got {self.max_sequence_length}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not 0.0 < self.decision_threshold < 1.0:
            raise ValueError(
                f"decision_threshold must be strictly inside (0, 1), got {self.decision_threshold}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        return cls(**data)


@dataclass
class EncoderPack:
    config: EncoderConfig
    params: dict[str, np.ndarray]
    tokenizer: BpeTokenizer


def save_encoder_pack(pack: EncoderPack, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pack.config.save(directory / "encoder.json")
    pack.tokenizer.save(directory / "tokenizer.json")
    save_weights(pack.params, directory / "weights.npz")


def _load_pack_dir(directory: Path) -> EncoderPack:
    config = EncoderConfig.load(directory / "encoder.json")
    tokenizer = BpeTokenizer.load(directory / "tokenizer.json")
    params = load_weights(directory / "weights.npz")
    if tokenizer.vocab_size != config.vocab_size:
        raise ArtifactError(
            f"tokenizer vocab ({tokenizer.vocab_size}) does not match encoder "
            f"vocab ({config.vocab_size}) in {directory}"
        )
    return EncoderPack(config=config, params=params, tokenizer=tokenizer)


def load_encoder_pack(name_or_path: str) -> EncoderPack:
    """Resolve a base-encoder identifier to (config, weights, tokenizer)."""
    if name_or_path == TINY_ENCODER:
        packaged = resources.files("issuetriage") / "encoders" / TINY_ENCODER
        with resources.as_file(packaged) as directory:
            return _load_pack_dir(Path(directory))
    candidate = Path(name_or_path)
    if candidate.is_dir():
        return _load_pack_dir(candidate)
    if name_or_path == "roberta-base":
        raise MissingEncoderError(
            "pretrained weights for 'roberta-base' are not bundled; export them "
            "as an encoder-pack directory (encoder.json + tokenizer.json + "
            "weights.npz) and pass its path as base_encoder. The bundled "
            f"desk-scale alternative is {TINY_ENCODER!r}."
        )
    raise MissingEncoderError(
        f"unknown base encoder {name_or_path!r}: expected {TINY_ENCODER!r}, "
        "'roberta-base', or a path to an encoder-pack directory"
    )


@dataclass
class ClassifierArtifact:
    """A trained classifier: encoder weights + head, paired tokenizer, the
    config it was trained with, corpus fingerprint, and version tag."""

    encoder_config: EncoderConfig
    params: dict[str, np.ndarray]
    tokenizer: BpeTokenizer
    training_config: TrainingConfig
    corpus_fingerprint: str = ""
    version_tag: str = ""
    loss_curve: list[float] = field(default_factory=list)


def _params_digest(params: dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    for name in sorted(params):
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(params[name]).tobytes())
    return digest.hexdigest()


def fine_tune(
    train: Sequence[LabeledExample],
    config: TrainingConfig,
    progress_sink: Callable[[int, int, float], None] | None = None,
) -> ClassifierArtifact:
    """Fine-tune the configured base encoder on labeled examples.

    Deterministic per seed (up to platform/backend numerics). The sink, when
    given, receives (epoch, step, loss) after every optimizer step.
    """
    if not train:
        raise TrainingError("training set is empty")
    positives = dict.fromkeys(LABELS, 0)
    for index, example in enumerate(train):
        if example.text != example.text.lower():
            raise TrainingError(
                f"example {index} ({example.source}) is not lowercased; "
                "prepare the corpus before training"
            )
        for label, slot in zip(LABELS, example.labels):
            positives[label] += slot
    for label, count in positives.items():
        if count == 0:
            raise TrainingError(f"{label} has no positive training examples")

    pack = load_encoder_pack(config.base_encoder)
    if config.max_sequence_length > pack.config.max_positions:
        raise TrainingError(
            f"max_sequence_length {config.max_sequence_length} exceeds the "
            f"encoder's max_positions {pack.config.max_positions}"
        )

    params = {name: value.copy() for name, value in pack.params.items()}
    dtype = params["tok_emb"].dtype
    head_rng = np.random.default_rng(config.seed)
    params["cls.w"] = (head_rng.standard_normal((pack.config.dim, len(LABELS))) * 0.02).astype(dtype)
    params["cls.b"] = np.zeros(len(LABELS), dtype=dtype)

    ids_all, mask_all = encode_batch(
        pack.tokenizer, [ex.text for ex in train], config.max_sequence_length, dtype=dtype
    )
    targets_all = np.array([ex.labels.as_tuple() for ex in train], dtype=dtype)

    trainable = [name for name in params if name != "mlm_bias"]
    optimizer = AdamW(params, names=trainable, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    curve: list[float] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        epoch_losses: list[float] = []
        for start in range(0, len(train), config.batch_size):
            pick = order[start : start + config.batch_size]
            ids = np.ascontiguousarray(ids_all[pick])
            mask = np.ascontiguousarray(mask_all[pick])
            targets = targets_all[pick]
            try:
                pooled, _, cache = encoder_forward(params, pack.config, ids, mask)
                logits = pooled @ params["cls.w"] + params["cls.b"]
                loss, dlogits = bce_with_logits(logits, targets)
                dpooled = dlogits @ params["cls.w"].T
                grads = encoder_backward(params, pack.config, cache, dpooled=dpooled)
            except MemoryError as exc:
                raise TrainingError(
                    f"out of memory during training at batch_size={config.batch_size}; "
                    "reduce the batch size or max_sequence_length"
                ) from exc
            grads["cls.w"] = pooled.T @ dlogits
            grads["cls.b"] = dlogits.sum(axis=0)
            optimizer.step(params, grads)
            step += 1
            epoch_losses.append(loss)
            if progress_sink is not None:
                progress_sink(epoch, step, loss)
        curve.append(float(np.mean(epoch_losses)))

    return ClassifierArtifact(
        encoder_config=pack.config,
        params=params,
        tokenizer=pack.tokenizer,
        training_config=config,
        corpus_fingerprint=corpus_fingerprint(train),
        version_tag="t-" + _params_digest(params)[:12],
        loss_curve=curve,
    )


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def _forward_probs(artifact: ClassifierArtifact, texts: Sequence[str]) -> np.ndarray:
    ids, mask = encode_batch(
        artifact.tokenizer,
        texts,
        artifact.training_config.max_sequence_length,
        dtype=artifact.params["tok_emb"].dtype,
    )
    pooled, _, _ = encoder_forward(artifact.params, artifact.encoder_config, ids, mask)
    logits = pooled @ artifact.params["cls.w"] + artifact.params["cls.b"]
    return sigmoid(logits)


def predict(artifact: ClassifierArtifact, text: str) -> Prediction:
    """Probabilities and thresholded labels for one text.

    The text is lowercased and truncated to the configured sequence length
    before encoding; anything beyond the truncation point cannot change the
    output.
    """
    if not text or not text.strip():
        raise DataError("cannot predict on empty text")
    probs = _forward_probs(artifact, [text.lower()])[0]
    return make_prediction(probs, artifact.training_config.decision_threshold)


def predict_batch(artifact: ClassifierArtifact, texts: Sequence[str]) -> list[Prediction]:
    """Element-wise identical to mapping `predict` over `texts`.

    Each row goes through exactly the single-text path: BLAS results are not
    bitwise stable across matrix shapes (threading changes the reduction
    order), and the contract here is exact equality, not closeness.
    """
    for index, text in enumerate(texts):
        if not text or not text.strip():
            raise DataError(f"cannot predict on empty text (index {index})")
    threshold = artifact.training_config.decision_threshold
    return [
        make_prediction(_forward_probs(artifact, [text.lower()])[0], threshold)
        for text in texts
    ]


# ---------------------------------------------------------------------------
# Artifact persistence
# ---------------------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_artifact(artifact: ClassifierArtifact, directory: str | Path) -> None:
    """Artifact directory: weights blob, tokenizer, configs, loss curve."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_weights(artifact.params, directory / "weights.npz")
    artifact.tokenizer.save(directory / "tokenizer.json")
    artifact.encoder_config.save(directory / "encoder.json")
    (directory / "metrics.json").write_text(
        json.dumps({"loss_curve": artifact.loss_curve}, indent=2) + "\n",
        encoding="utf-8",
    )
    payload = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "kind": "transformer-classifier",
        "labels": list(LABELS),
        "training_config": artifact.training_config.to_dict(),
        "corpus_fingerprint": artifact.corpus_fingerprint,
        "version_tag": artifact.version_tag,
        "checksums": {
            name: _sha256_file(directory / name)
            for name in ("weights.npz", "tokenizer.json", "encoder.json")
        },
    }
    (directory / "config.json").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )


def load_artifact(directory: str | Path) -> ClassifierArtifact:
    directory = Path(directory)
    config_path = directory / "config.json"
    if not config_path.exists():
        raise DataError(f"not a classifier artifact (missing config.json): {directory}")
    payload = json.loads(config_path.read_text(encoding="utf-8"))
    version = payload.get("format_version", 0)
    if version > ARTIFACT_FORMAT_VERSION:
        raise VersionError(
            f"artifact format version {version} is newer than supported "
            f"version {ARTIFACT_FORMAT_VERSION}"
        )
    for name, expected in payload.get("checksums", {}).items():
        actual = _sha256_file(directory / name)
        if actual != expected:
            raise ChecksumError(
                f"checksum mismatch for {name}: expected {expected[:12]}.., "
                f"got {actual[:12]}.."
            )
    encoder_config = EncoderConfig.load(directory / "encoder.json")
    tokenizer = BpeTokenizer.load(directory / "tokenizer.json")
    if tokenizer.vocab_size != encoder_config.vocab_size:
        raise ArtifactError(
            f"artifact/tokenizer mismatch: tokenizer has {tokenizer.vocab_size} "
            f"tokens but the encoder expects {encoder_config.vocab_size}"
        )
    return ClassifierArtifact(
        encoder_config=encoder_config,
        params=load_weights(directory / "weights.npz"),
        tokenizer=tokenizer,
        training_config=TrainingConfig.from_dict(payload["training_config"]),
        corpus_fingerprint=payload.get("corpus_fingerprint", ""),
        version_tag=payload.get("version_tag", ""),
        loss_curve=json.loads((directory / "metrics.json").read_text(encoding="utf-8")).get(
            "loss_curve", []
        )
        if (directory / "metrics.json").exists()
        else [],
    )
