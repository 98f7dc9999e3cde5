"""Per-label confusion counts, MCC and two-class Macro-F1, and the
category-averaged report."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import MISSING, POSITIVE, LabelSpace


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(preds: np.ndarray, targets: np.ndarray, threshold: float = 0.5) -> list[ConfusionCounts]:
    """One ConfusionCounts per label column; ``p >= threshold`` is positive,
    missing targets are skipped."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    p = np.asarray(preds) >= threshold
    t = np.asarray(targets)
    seen = t != MISSING
    pos = t == POSITIVE
    out = []
    for c in range(t.shape[1]):
        s, y, q = seen[:, c], pos[:, c], p[:, c]
        out.append(ConfusionCounts(
            tp=int(np.sum(s & y & q)),
            tn=int(np.sum(s & ~y & ~q)),
            fp=int(np.sum(s & ~y & q)),
            fn=int(np.sum(s & y & ~q)),
        ))
    return out


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation; 0 when any marginal is empty."""
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def _f1(hit: int, false_alarm: int, miss: int) -> float:
    d = 2 * hit + false_alarm + miss
    return 2 * hit / d if d else 0.0


def f1_positive(c: ConfusionCounts) -> float:
    return _f1(c.tp, c.fp, c.fn)


def f1_negative(c: ConfusionCounts) -> float:
    return _f1(c.tn, c.fn, c.fp)


def macro_f1(c: ConfusionCounts) -> float:
    """Mean of the positive-class and negative-class F1 for one label."""
    return 0.5 * (f1_positive(c) + f1_negative(c))


@dataclass(frozen=True)
class LabelMetrics:
    name: str
    category: str
    counts: ConfusionCounts
    mcc: float
    macro_f1: float


@dataclass(frozen=True)
class Average:
    mcc: float
    macro_f1: float


@dataclass(frozen=True)
class MetricsReport:
    labels: tuple[LabelMetrics, ...]
    context_avg: Average
    activity_avg: Average
    overall_avg: Average

    @property
    def overall_mcc(self) -> float:
        return self.overall_avg.mcc

    def to_csv(self) -> str:
        lines = ["name,category,TP,TN,FP,FN,MCC,MacF1"]
        for m in self.labels:
            c = m.counts
            lines.append(f"{m.name},{m.category},{c.tp},{c.tn},{c.fp},{c.fn},"
                         f"{m.mcc:.6f},{m.macro_f1:.6f}")
        for name, cat, avg in (("Context Avg", "context", self.context_avg),
                               ("Activity Avg", "activity", self.activity_avg),
                               ("Overall Avg", "overall", self.overall_avg)):
            lines.append(f"{name},{cat},,,,,{avg.mcc:.6f},{avg.macro_f1:.6f}")
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _mean(rows: list[LabelMetrics]) -> Average:
    if not rows:
        return Average(0.0, 0.0)
    return Average(float(np.mean([r.mcc for r in rows])),
                   float(np.mean([r.macro_f1 for r in rows])))


def aggregate_report(counts: list[ConfusionCounts], space: LabelSpace) -> MetricsReport:
    """Unweighted means within contexts, within activities, and over all labels."""
    if len(counts) != space.num_labels:
        raise ValueError(f"{len(counts)} label counts for {space.num_labels} labels")
    cats = ["context"] * space.num_contexts + ["activity"] * space.num_activities
    rows = [LabelMetrics(n, cat, c, mcc(c), macro_f1(c))
            for n, cat, c in zip(space.names, cats, counts)]
    return MetricsReport(
        tuple(rows),
        _mean([r for r in rows if r.category == "context"]),
        _mean([r for r in rows if r.category == "activity"]),
        _mean(rows),
    )


def evaluate_predictions(probs: np.ndarray, targets: np.ndarray, space: LabelSpace,
                         threshold: float = 0.5) -> MetricsReport:
    return aggregate_report(confusion(probs, targets, threshold), space)
