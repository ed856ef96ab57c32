"""Event lists <-> per-step (presence, start, stop) regression grids.

Grid layout per step is class-major triplets: for classes ``[a, b]`` the row
is ``[a_present, a_start, a_stop, b_present, b_start, b_stop]``. Start and stop
are offsets within the step, normalised by the step duration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Event",
    "YohoGrid",
    "encode",
    "decode",
    "decode_array",
    "encode_frames",
    "merge_touching",
    "read_events_tsv",
    "write_events_tsv",
]

DEFAULT_THRESHOLD = 0.5
MERGE_EPSILON = 1e-4


class Event(NamedTuple):
    class_name: str
    onset: float
    offset: float

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass
class YohoGrid:
    values: np.ndarray  # (steps, classes, 3)
    classes: list[str]
    step_duration: float

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def presence(self) -> np.ndarray:
        return self.values[:, :, 0]

    def flatten(self) -> np.ndarray:
        """``(steps, 3 * classes)`` in network output order."""
        return self.values.reshape(self.steps, -1)

    @classmethod
    def from_flat(cls, flat, classes: Sequence[str], step_duration: float) -> "YohoGrid":
        flat = np.asarray(flat)
        if flat.ndim != 2 or flat.shape[1] != 3 * len(classes):
            raise ValueError(f"expected (steps, {3 * len(classes)}) array, got {flat.shape}")
        return cls(flat.reshape(flat.shape[0], len(classes), 3).copy(), list(classes), step_duration)


def encode(events: Iterable[Event], clip_duration: float, n_steps: int,
           classes: Sequence[str]) -> YohoGrid:
    """Rasterise events into a regression target grid.

    A class is present in step ``k`` (span ``[k*d, (k+1)*d)``) when one of its
    events overlaps the span with positive length. When two events of a class
    share a step, the step records the earliest start and latest stop; that is
    a lossy merge, since one triplet per class per step cannot hold both.
    Absent cells keep start = stop = 0 (ignored by the loss).
    """
    classes = list(classes)
    index = {c: i for i, c in enumerate(classes)}
    d = clip_duration / n_steps
    values = np.zeros((n_steps, len(classes), 3))
    for ev in events:
        if ev.class_name not in index:
            raise ValueError(f"unknown class {ev.class_name!r}")
        if not 0 <= ev.onset < ev.offset <= clip_duration + 1e-9:
            raise ValueError(f"event {ev} outside clip [0, {clip_duration}]")
        c = index[ev.class_name]
        first = max(0, int(math.floor(ev.onset / d)) - 1)
        last = min(n_steps - 1, int(math.ceil(ev.offset / d)))
        for k in range(first, last + 1):
            lo, hi = k * d, (k + 1) * d
            if min(ev.offset, hi) - max(ev.onset, lo) <= 0:
                continue
            start = max(0.0, (ev.onset - lo) / d)
            stop = min(1.0, (ev.offset - lo) / d)
            cell = values[k, c]
            if cell[0]:
                start, stop = min(start, cell[1]), max(stop, cell[2])
            cell[:] = (1.0, start, stop)
    return YohoGrid(values, classes, d)


def encode_frames(events: Iterable[Event], n_frames: int, frame_duration: float,
                  classes: Sequence[str]) -> np.ndarray:
    """Binary ``(n_frames, classes)`` targets for the frame baseline.

    Frame ``k`` covers ``[k * frame_duration, (k + 1) * frame_duration)`` and is
    active when an event of the class overlaps it, the same span convention
    :func:`yoho.postprocess.frames_to_events` reads back.
    """
    index = {c: i for i, c in enumerate(classes)}
    out = np.zeros((n_frames, len(index)), dtype=np.float32)
    for ev in events:
        c = index.get(ev.class_name)
        if c is None:
            raise ValueError(f"unknown class {ev.class_name!r}")
        first = max(0, int(math.floor(ev.onset / frame_duration)))
        last = min(n_frames, int(math.ceil(ev.offset / frame_duration)))
        out[first:last, c] = 1.0
    return out


def merge_touching(events: Iterable[Event], epsilon: float = MERGE_EPSILON) -> list[Event]:
    """Merge same-class events whose gap is at most ``epsilon``; sort by onset."""
    by_class: dict[str, list[Event]] = {}
    for ev in sorted(events, key=lambda e: (e.class_name, e.onset, e.offset)):
        bucket = by_class.setdefault(ev.class_name, [])
        if bucket and ev.onset - bucket[-1].offset <= epsilon:
            prev = bucket[-1]
            bucket[-1] = Event(prev.class_name, prev.onset, max(prev.offset, ev.offset))
        else:
            bucket.append(ev)
    out = [ev for bucket in by_class.values() for ev in bucket]
    return sorted(out, key=lambda e: (e.onset, e.offset, e.class_name))


def decode(grid: YohoGrid, presence_threshold: float = DEFAULT_THRESHOLD,
           merge_epsilon: float = MERGE_EPSILON, time_offset: float = 0.0) -> list[Event]:
    """Turn a (predicted) grid back into events.

    Each present step contributes ``[(k + start) * d, (k + stop) * d]``;
    fragments of one class that touch are joined. ``time_offset`` shifts the
    result, which is how tiled windows are placed on a long recording.
    """
    if not 0 < presence_threshold < 1:
        raise ValueError("presence_threshold must be in (0, 1)")
    d = grid.step_duration
    events = []
    for c, name in enumerate(grid.classes):
        cells = grid.values[:, c]
        ks = np.flatnonzero(cells[:, 0] >= presence_threshold)
        lo = np.minimum(cells[ks, 1], cells[ks, 2])
        hi = np.maximum(cells[ks, 1], cells[ks, 2])
        keep = hi > lo
        ks, lo, hi = ks[keep], lo[keep], hi[keep]
        if not len(ks):
            continue
        on = time_offset + (ks + lo) * d
        off = np.maximum.accumulate(time_offset + (ks + hi) * d)
        # a new event starts wherever the gap to everything before exceeds epsilon
        starts = np.flatnonzero(np.concatenate([[True], on[1:] - off[:-1] > merge_epsilon]))
        ends = np.append(starts[1:], len(on)) - 1
        events.extend(Event(name, a, b) for a, b in zip(on[starts].tolist(), off[ends].tolist()))
    return sorted(events, key=lambda e: (e.onset, e.offset, e.class_name))


def decode_array(flat: np.ndarray, classes: Sequence[str], step_duration: float,
                 presence_threshold: float = DEFAULT_THRESHOLD, time_offset: float = 0.0):
    return decode(YohoGrid.from_flat(flat, classes, step_duration), presence_threshold,
                  time_offset=time_offset)


def read_events_tsv(path) -> list[Event]:
    """Read ``onset<TAB>offset<TAB>class`` lines; blank lines are skipped."""
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            onset, offset, name = float(parts[0]), float(parts[1]), parts[2]
            if not offset > onset:
                raise ValueError(f"{path}:{lineno}: offset must exceed onset")
            events.append(Event(name, onset, offset))
    return events


def write_events_tsv(path, events: Iterable[Event], decimals: int = 6) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in sorted(events, key=lambda e: (e.onset, e.offset, e.class_name)):
            fh.write(f"{ev.onset:.{decimals}f}\t{ev.offset:.{decimals}f}\t{ev.class_name}\n")
