"""Confusion counts and precision / recall / F1."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, truth: Sequence[bool], pred: Sequence[bool]) -> "ConfusionCounts":
        if len(truth) != len(pred):
            raise ValueError("truth and prediction lengths differ")
        tp = fp = tn = fn = 0
        for t, p in zip(truth, pred):
            if p:
                tp, fp = (tp + 1, fp) if t else (tp, fp + 1)
            else:
                fn, tn = (fn + 1, tn) if t else (fn, tn + 1)
        return cls(tp, fp, tn, fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def prf1(c: ConfusionCounts) -> tuple[float, float, float]:
    """Precision, recall, F1; every 0/0 is reported as 0."""
    p = _ratio(c.tp, c.tp + c.fp)
    r = _ratio(c.tp, c.tp + c.fn)
    return p, r, f1_score(p, r)


def f1_score(precision: float, recall: float) -> float:
    return _ratio(2 * precision * recall, precision + recall)
