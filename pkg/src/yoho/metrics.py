"""Segment-based sound event detection metrics.

Event lists are rasterised onto fixed-length segments; a (segment, class)
cell is active when an event of that class overlaps the segment with
positive length. Overall precision/recall/F are micro-averaged over all cells,
and the error rate is built from per-segment substitutions, deletions and
insertions::

    S_k = min(FN_k, FP_k)
    D_k = max(0, FN_k - FP_k)
    I_k = max(0, FP_k - FN_k)
    ER  = (sum S + sum D + sum I) / sum N

where ``N_k`` is the number of active reference classes in segment ``k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .label_codec import Event

__all__ = [
    "SegmentCounts",
    "MetricsReport",
    "segmentize",
    "segment_counts",
    "segment_f1",
    "error_rate",
    "class_wise_f1",
    "evaluate",
    "n_segments",
    "f_measure",
]

# absorbs float noise when an event boundary sits on a segment boundary
_EDGE_TOL = 1e-9


def f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _ratio(num, den):
    return num / den if den else 0.0


def n_segments(total_duration: float, segment_size: float) -> int:
    return max(0, int(math.ceil(total_duration / segment_size - _EDGE_TOL)))


def _default_duration(*lists: Iterable[Event]) -> float:
    return max((ev.offset for lst in lists for ev in lst), default=0.0)


def segmentize(events: Iterable[Event], segment_size: float, total_duration: float,
               classes: Sequence[str]) -> np.ndarray:
    """Boolean activity matrix of shape ``(segments, classes)``.

    Events of classes not in ``classes`` are ignored; anything past
    ``total_duration`` is clipped.
    """
    if segment_size <= 0:
        raise ValueError("segment_size must be positive")
    k = n_segments(total_duration, segment_size)
    index = {c: i for i, c in enumerate(classes)}
    roll = np.zeros((k, len(index)), dtype=bool)
    for ev in events:
        c = index.get(ev.class_name)
        if c is None or ev.offset <= ev.onset:
            continue
        first = max(0, int(math.floor(ev.onset / segment_size + _EDGE_TOL)))
        last = min(k, int(math.ceil(ev.offset / segment_size - _EDGE_TOL)))
        if last > first:
            roll[first:last, c] = True
    return roll


@dataclass
class SegmentCounts:
    """Additive cell counts; sum these over files, then derive metrics once."""

    classes: list
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    n_ref: int = 0
    segments: int = 0
    # classes that appear in at least one list
    seen: set = field(default_factory=set)

    @classmethod
    def empty(cls, classes):
        z = np.zeros(len(classes), dtype=np.int64)
        return cls(list(classes), z.copy(), z.copy(), z.copy())

    def __add__(self, other: "SegmentCounts") -> "SegmentCounts":
        if self.classes != other.classes:
            raise ValueError("cannot add counts over different class lists")
        return SegmentCounts(
            self.classes, self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
            self.substitutions + other.substitutions, self.deletions + other.deletions,
            self.insertions + other.insertions, self.n_ref + other.n_ref,
            self.segments + other.segments, self.seen | other.seen)

    def precision_recall_f(self):
        tp, fp, fn = int(self.tp.sum()), int(self.fp.sum()), int(self.fn.sum())
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        return p, r, f_measure(p, r)

    def error_rate(self):
        s, d, i, n = self.substitutions, self.deletions, self.insertions, self.n_ref
        if n == 0:
            er = math.inf if (s + d + i) else 0.0
        else:
            er = (s + d + i) / n
        return er, s, d, i, n

    def class_f(self) -> dict:
        out = {}
        for j, name in enumerate(self.classes):
            if name not in self.seen:
                continue
            tp, fp, fn = int(self.tp[j]), int(self.fp[j]), int(self.fn[j])
            out[name] = f_measure(_ratio(tp, tp + fp), _ratio(tp, tp + fn))
        return out


def segment_counts(reference: Sequence[Event], estimate: Sequence[Event], segment_size: float,
                   total_duration: Optional[float] = None,
                   classes: Optional[Sequence[str]] = None) -> SegmentCounts:
    if classes is None:
        classes = sorted({ev.class_name for ev in list(reference) + list(estimate)})
    if total_duration is None:
        total_duration = _default_duration(reference, estimate)
    ref = segmentize(reference, segment_size, total_duration, classes)
    est = segmentize(estimate, segment_size, total_duration, classes)
    tp_cells = ref & est
    fn_k = (ref & ~est).sum(axis=1)
    fp_k = (~ref & est).sum(axis=1)
    seen = {ev.class_name for ev in list(reference) + list(estimate)} & set(classes)
    return SegmentCounts(
        list(classes),
        tp_cells.sum(axis=0).astype(np.int64),
        (~ref & est).sum(axis=0).astype(np.int64),
        (ref & ~est).sum(axis=0).astype(np.int64),
        int(np.minimum(fn_k, fp_k).sum()),
        int(np.maximum(0, fn_k - fp_k).sum()),
        int(np.maximum(0, fp_k - fn_k).sum()),
        int(ref.sum()),
        ref.shape[0],
        seen,
    )


def segment_f1(reference, estimate, segment_size, total_duration=None, classes=None):
    """Micro-averaged ``(precision, recall, f_measure)`` over all cells."""
    return segment_counts(reference, estimate, segment_size, total_duration,
                          classes).precision_recall_f()


def error_rate(reference, estimate, segment_size, total_duration=None, classes=None):
    """``(ER, S, D, I, N)``. ER is ``inf`` when the reference is empty but the
    estimate inserts something, and 0 when both are empty."""
    return segment_counts(reference, estimate, segment_size, total_duration,
                          classes).error_rate()


def class_wise_f1(reference, estimate, segment_size, total_duration=None, classes=None):
    """F-measure per class; classes absent from both lists are omitted."""
    return segment_counts(reference, estimate, segment_size, total_duration, classes).class_f()


@dataclass
class MetricsReport:
    segment_size: float
    precision: float
    recall: float
    f_measure: float
    error_rate: float
    substitutions: int
    deletions: int
    insertions: int
    n_ref: int
    per_class: dict

    @classmethod
    def from_counts(cls, counts: SegmentCounts, segment_size: float) -> "MetricsReport":
        p, r, f = counts.precision_recall_f()
        er, s, d, i, n = counts.error_rate()
        return cls(segment_size, p, r, f, er, s, d, i, n, counts.class_f())

    def to_dict(self) -> dict:
        """Machine-readable form. Keys: ``segment_size`` (s), ``overall``
        (``precision``, ``recall``, ``f_measure`` as fractions), ``error_rate``
        (``er``, ``s``, ``d``, ``i``, ``n``; ``er`` is null when infinite),
        ``per_class`` (class -> F as fraction)."""
        er = None if math.isinf(self.error_rate) else self.error_rate
        return {
            "segment_size": self.segment_size,
            "overall": {"precision": self.precision, "recall": self.recall,
                        "f_measure": self.f_measure},
            "error_rate": {"er": er, "s": self.substitutions, "d": self.deletions,
                           "i": self.insertions, "n": self.n_ref},
            "per_class": dict(self.per_class),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        """``key=value`` lines; F-measures as percentages with two decimals."""
        lines = [
            f"segment_size={self.segment_size:g}",
            f"f_overall={100 * self.f_measure:.2f}",
            f"precision={100 * self.precision:.2f}",
            f"recall={100 * self.recall:.2f}",
            f"error_rate={self.error_rate:.2f}",
            f"substitutions={self.substitutions}",
            f"deletions={self.deletions}",
            f"insertions={self.insertions}",
            f"n_ref={self.n_ref}",
        ]
        lines += [f"f_{name}={100 * f:.2f}" for name, f in sorted(self.per_class.items())]
        return "\n".join(lines) + "\n"


def evaluate(reference, estimate, segment_size, total_duration=None, classes=None) -> MetricsReport:
    counts = segment_counts(reference, estimate, segment_size, total_duration, classes)
    return MetricsReport.from_counts(counts, segment_size)
