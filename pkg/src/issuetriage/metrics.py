"""Multi-label evaluation: per-label confusion counts, precision/recall/F1,
hamming loss, and side-by-side report comparison.

Metrics are reported per label (bug / enhancement / question), not
micro-averaged. Hamming loss divides by ``3 * n_examples``: the total number
of label slots. When a precision or recall denominator is zero the metric is
defined as 0.0 and the case is annotated in the report's notes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import DataError, FingerprintMismatch
from .labels import LABELS, LabelVector


@dataclass(frozen=True)
class LabelCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class EvaluationReport:
    """Everything `evaluate` measured over one (predictions, truths) set."""

    n_examples: int
    counts: dict[str, LabelCounts]
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    hamming_loss: float
    model_id: str = ""
    corpus_fingerprint: str = ""
    notes: list[str] = field(default_factory=list)

    def macro_f1(self) -> float:
        return sum(self.f1[label] for label in LABELS) / len(LABELS)

    def to_dict(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "counts": {
                label: {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn}
                for label, c in self.counts.items()
            },
            "precision": dict(self.precision),
            "recall": dict(self.recall),
            "f1": dict(self.f1),
            "hamming_loss": self.hamming_loss,
            "model_id": self.model_id,
            "corpus_fingerprint": self.corpus_fingerprint,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationReport":
        try:
            counts = {
                label: LabelCounts(**data["counts"][label]) for label in LABELS
            }
            return cls(
                n_examples=int(data["n_examples"]),
                counts=counts,
                precision={label: float(data["precision"][label]) for label in LABELS},
                recall={label: float(data["recall"][label]) for label in LABELS},
                f1={label: float(data["f1"][label]) for label in LABELS},
                hamming_loss=float(data["hamming_loss"]),
                model_id=data.get("model_id", ""),
                corpus_fingerprint=data.get("corpus_fingerprint", ""),
                notes=list(data.get("notes", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed evaluation report: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvaluationReport":
        p = Path(path)
        if not p.exists():
            raise DataError(f"report file not found: {p}")
        return cls.from_dict(json.loads(p.read_text(encoding="utf-8")))

    def format_table(self) -> str:
        lines = [
            f"{'label':<12} {'tp':>5} {'fp':>5} {'fn':>5} {'tn':>5} "
            f"{'precision':>10} {'recall':>10} {'f1':>10}"
        ]
        for label in LABELS:
            c = self.counts[label]
            lines.append(
                f"{label:<12} {c.tp:>5} {c.fp:>5} {c.fn:>5} {c.tn:>5} "
                f"{self.precision[label]:>10.4f} {self.recall[label]:>10.4f} "
                f"{self.f1[label]:>10.4f}"
            )
        lines.append(f"hamming loss: {self.hamming_loss:.4f}  (n={self.n_examples})")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines)


def evaluate(
    predictions: Sequence[LabelVector],
    truths: Sequence[LabelVector],
    *,
    model_id: str = "",
    corpus_fingerprint: str = "",
) -> EvaluationReport:
    """Score predictions against truths, one confusion matrix per label."""
    if len(predictions) != len(truths):
        raise DataError(
            f"length mismatch: {len(predictions)} predictions vs {len(truths)} truths"
        )
    if not predictions:
        raise DataError("cannot evaluate an empty prediction set")

    n = len(predictions)
    counts: dict[str, LabelCounts] = {}
    for slot, label in enumerate(LABELS):
        tp = fp = fn = tn = 0
        for pred, truth in zip(predictions, truths):
            p = pred.as_tuple()[slot]
            t = truth.as_tuple()[slot]
            if p and t:
                tp += 1
            elif p and not t:
                fp += 1
            elif not p and t:
                fn += 1
            else:
                tn += 1
        counts[label] = LabelCounts(tp=tp, fp=fp, fn=fn, tn=tn)

    precision: dict[str, float] = {}
    recall: dict[str, float] = {}
    f1: dict[str, float] = {}
    notes: list[str] = []
    for label in LABELS:
        c = counts[label]
        if c.tp + c.fp == 0:
            precision[label] = 0.0
            notes.append(f"{label}: precision denominator 0 (no positive predictions), defined as 0.0")
        else:
            precision[label] = c.tp / (c.tp + c.fp)
        if c.tp + c.fn == 0:
            recall[label] = 0.0
            notes.append(f"{label}: recall denominator 0 (no positive truths), defined as 0.0")
        else:
            recall[label] = c.tp / (c.tp + c.fn)
        p, r = precision[label], recall[label]
        f1[label] = 0.0 if p + r == 0 else 2 * p * r / (p + r)

    wrong_slots = sum(counts[label].fp + counts[label].fn for label in LABELS)
    hamming = wrong_slots / (len(LABELS) * n)

    return EvaluationReport(
        n_examples=n,
        counts=counts,
        precision=precision,
        recall=recall,
        f1=f1,
        hamming_loss=hamming,
        model_id=model_id,
        corpus_fingerprint=corpus_fingerprint,
        notes=notes,
    )


@dataclass
class ComparisonRow:
    metric: str
    label: str
    value_a: float
    value_b: float
    delta: float
    winner: str  # "a", "b", or "tie"


@dataclass
class Comparison:
    name_a: str
    name_b: str
    rows: list[ComparisonRow]

    def to_dict(self) -> dict:
        return {
            "a": self.name_a,
            "b": self.name_b,
            "rows": [
                {
                    "metric": r.metric,
                    "label": r.label,
                    "a": r.value_a,
                    "b": r.value_b,
                    "delta": r.delta,
                    "winner": r.winner,
                }
                for r in self.rows
            ],
        }

    def format_table(self) -> str:
        width = max(14, len(self.name_a), len(self.name_b))
        lines = [
            f"{'metric':<22} {self.name_a:>{width}} {self.name_b:>{width}} "
            f"{'delta':>9} {'winner':>8}"
        ]
        for r in self.rows:
            name = f"{r.metric}[{r.label}]" if r.label else r.metric
            winner = {"a": self.name_a, "b": self.name_b}.get(r.winner, "tie")
            lines.append(
                f"{name:<22} {r.value_a:>{width}.4f} {r.value_b:>{width}.4f} "
                f"{r.delta:>+9.4f} {winner:>8}"
            )
        return "\n".join(lines)


def compare_reports(
    a: EvaluationReport,
    b: EvaluationReport,
    *,
    name_a: str = "a",
    name_b: str = "b",
) -> Comparison:
    """Side-by-side metric table with per-metric winner flags.

    Refuses to compare reports computed over different test sets.
    """
    if a.corpus_fingerprint != b.corpus_fingerprint:
        raise FingerprintMismatch(
            "reports were computed on different corpora: "
            f"{a.corpus_fingerprint!r} vs {b.corpus_fingerprint!r}"
        )
    if a.n_examples != b.n_examples:
        raise FingerprintMismatch(
            f"reports cover different example counts: {a.n_examples} vs {b.n_examples}"
        )

    rows: list[ComparisonRow] = []

    def flag(value_a: float, value_b: float, lower_wins: bool = False) -> str:
        if value_a == value_b:
            return "tie"
        if lower_wins:
            return "a" if value_a < value_b else "b"
        return "a" if value_a > value_b else "b"

    for metric, table_a, table_b in (
        ("precision", a.precision, b.precision),
        ("recall", a.recall, b.recall),
        ("f1", a.f1, b.f1),
    ):
        for label in LABELS:
            va, vb = table_a[label], table_b[label]
            rows.append(ComparisonRow(metric, label, va, vb, vb - va, flag(va, vb)))
    rows.append(
        ComparisonRow(
            "hamming_loss",
            "",
            a.hamming_loss,
            b.hamming_loss,
            b.hamming_loss - a.hamming_loss,
            flag(a.hamming_loss, b.hamming_loss, lower_wins=True),
        )
    )
    return Comparison(name_a=name_a, name_b=name_b, rows=rows)
