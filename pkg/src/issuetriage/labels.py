"""The three in-scope issue labels and the vectors/predictions built on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

LABELS: tuple[str, str, str] = ("bug", "enhancement", "question")


@dataclass(frozen=True)
class LabelVector:
    """Binary slot per label; slots are non-exclusive (an issue may set 0-3)."""

    bug: int = 0
    enhancement: int = 0
    question: int = 0

    def __post_init__(self) -> None:
        for name in LABELS:
            value = getattr(self, name)
            if value not in (0, 1):
                raise ValueError(f"label slot {name!r} must be 0 or 1, got {value!r}")

    @classmethod
    def from_tuple(cls, slots: Sequence[int]) -> "LabelVector":
        if len(slots) != len(LABELS):
            raise ValueError(f"expected {len(LABELS)} slots, got {len(slots)}")
        return cls(*(int(s) for s in slots))

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "LabelVector":
        present = set(names)
        return cls(*(1 if label in present else 0 for label in LABELS))

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.bug, self.enhancement, self.question)

    def names(self) -> tuple[str, ...]:
        return tuple(label for label in LABELS if getattr(self, label))

    def any(self) -> bool:
        return bool(self.bug or self.enhancement or self.question)

    def __iter__(self) -> Iterator[int]:
        return iter(self.as_tuple())


@dataclass(frozen=True)
class Prediction:
    """Per-label sigmoid probabilities plus the thresholded label vector.

    Probabilities are independent; they need not sum to 1.
    """

    probabilities: tuple[float, float, float]
    labels: LabelVector


def threshold_probabilities(
    probabilities: Sequence[float], threshold: float
) -> LabelVector:
    """A slot is set iff its probability is >= threshold."""
    return LabelVector.from_tuple([1 if p >= threshold else 0 for p in probabilities])


def make_prediction(probabilities: Sequence[float], threshold: float) -> Prediction:
    probs = tuple(float(p) for p in probabilities)
    if len(probs) != len(LABELS):
        raise ValueError(f"expected {len(LABELS)} probabilities, got {len(probs)}")
    return Prediction(probabilities=probs, labels=threshold_probabilities(probs, threshold))
