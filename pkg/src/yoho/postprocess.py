"""Gap-merging and minimum-duration smoothing of event lists."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .label_codec import Event

__all__ = ["ClassRule", "SmoothingConfig", "smooth", "frames_to_events"]


@dataclass(frozen=True)
class ClassRule:
    min_gap: float = 0.0
    min_duration: Optional[float] = None

    def __post_init__(self):
        if self.min_gap < 0:
            raise ValueError("min_gap must be >= 0")
        if self.min_duration is not None and self.min_duration < 0:
            raise ValueError("min_duration must be >= 0")


@dataclass(frozen=True)
class SmoothingConfig:
    """Per-class smoothing rules; classes not listed fall back to ``default``."""

    per_class: dict = field(default_factory=dict)
    default: ClassRule = ClassRule()

    def rule(self, class_name: str) -> ClassRule:
        return self.per_class.get(class_name, self.default)


def smooth(events: Iterable[Event], config: SmoothingConfig) -> list[Event]:
    """Merge same-class events separated by less than ``min_gap``, then drop
    events shorter than ``min_duration``.

    The gap test is strict: a gap exactly equal to ``min_gap`` is kept.
    """
    by_class: dict[str, list[Event]] = {}
    for ev in sorted(events, key=lambda e: (e.class_name, e.onset, e.offset)):
        by_class.setdefault(ev.class_name, []).append(ev)

    out = []
    for name, evs in by_class.items():
        rule = config.rule(name)
        merged = [evs[0]]
        for ev in evs[1:]:
            prev = merged[-1]
            if ev.onset - prev.offset < rule.min_gap or ev.onset <= prev.offset:
                merged[-1] = Event(name, prev.onset, max(prev.offset, ev.offset))
            else:
                merged.append(ev)
        if rule.min_duration is not None:
            merged = [ev for ev in merged if ev.duration >= rule.min_duration]
        out.extend(merged)
    return sorted(out, key=lambda e: (e.onset, e.offset, e.class_name))


def frames_to_events(probs: np.ndarray, classes, frame_duration: float,
                     threshold: float = 0.5, time_offset: float = 0.0) -> list[Event]:
    """Binarise frame-wise probabilities ``(frames, classes)`` and emit one event
    per run of active frames. This is the parsing step frame-classification
    models need before smoothing."""
    events = []
    active = np.asarray(probs) >= threshold
    for c, name in enumerate(classes):
        edges = np.diff(np.concatenate([[0], active[:, c].astype(np.int8), [0]]))
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1)
        events.extend(Event(name, time_offset + a * frame_duration, time_offset + b * frame_duration)
                      for a, b in zip(starts.tolist(), stops.tolist()))
    return sorted(events, key=lambda e: (e.onset, e.offset, e.class_name))
