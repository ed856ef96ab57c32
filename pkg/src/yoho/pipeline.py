"""File-level pipeline: tiled long-file prediction, dataset loading,
directory evaluation and the speed benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .audio_io import AudioBuffer, load_mono, load_wav
from .datagen import read_manifest
from .features import log_mel
from .label_codec import (Event, decode_array, encode, encode_frames, merge_touching,
                          read_events_tsv)
from .metrics import MetricsReport, SegmentCounts, segment_counts
from .network.model import Network
from .postprocess import frames_to_events, smooth
from .profiles import PipelineProfile

__all__ = [
    "ModelMismatchError",
    "check_model",
    "tile_windows",
    "window_features",
    "network_events",
    "predict_events",
    "load_training_set",
    "evaluate_dirs",
    "UnmatchedFilesError",
    "BenchReport",
    "bench",
]


class ModelMismatchError(ValueError):
    """The checkpoint architecture does not fit the requested profile."""


class UnmatchedFilesError(ValueError):
    def __init__(self, missing_est, missing_ref):
        self.missing_est = sorted(missing_est)
        self.missing_ref = sorted(missing_ref)
        parts = []
        if self.missing_est:
            parts.append("no estimate for: " + ", ".join(self.missing_est))
        if self.missing_ref:
            parts.append("no reference for: " + ", ".join(self.missing_ref))
        super().__init__("; ".join(parts))


def check_model(net: Network, profile: PipelineProfile) -> None:
    if net.input_shape != (profile.input_time, profile.features.n_mels):
        raise ModelMismatchError(
            f"model expects input {net.input_shape}, profile {profile.name} with a "
            f"{profile.window} s window produces {(profile.input_time, profile.features.n_mels)}")
    if net.n_classes != len(profile.classes):
        raise ModelMismatchError(
            f"model predicts {net.n_classes} classes, profile lists {len(profile.classes)}")


def tile_windows(samples: np.ndarray, window_samples: int) -> np.ndarray:
    """Consecutive non-overlapping windows; the last one is zero-padded.
    Always returns at least one window."""
    n = max(1, -(-len(samples) // window_samples))
    padded = np.zeros(n * window_samples)
    padded[:len(samples)] = samples
    return padded.reshape(n, window_samples)


def window_features(windows: np.ndarray, profile: PipelineProfile) -> np.ndarray:
    sr = profile.features.sample_rate
    return np.stack([log_mel(AudioBuffer(w, sr), profile.features).values for w in windows]
                    ).astype(np.float32)


def network_events(net: Network, outputs: np.ndarray, profile: PipelineProfile,
                   threshold: float = 0.5) -> list[Event]:
    """Parse stacked per-window outputs into one event list on the file timeline."""
    events = []
    if net.arch.head == "yoho":
        step = profile.window / outputs.shape[1]
        for i, out in enumerate(outputs):
            events.extend(decode_array(out, profile.classes, step, threshold,
                                       time_offset=i * profile.window))
    else:
        hop = profile.features.hop
        for i, out in enumerate(outputs):
            evs = frames_to_events(out, profile.classes, hop, threshold, time_offset=i * profile.window)
            end = (i + 1) * profile.window
            events.extend(Event(e.class_name, e.onset, min(e.offset, end))
                          for e in evs if e.onset < end)
    return merge_touching(events)


def _clip(events, duration):
    return [Event(e.class_name, e.onset, min(e.offset, duration))
            for e in events if e.onset < duration and min(e.offset, duration) > e.onset]


def predict_events(net: Network, buffer: AudioBuffer, profile: PipelineProfile,
                   threshold: float = 0.5, apply_smoothing: bool = True,
                   batch_size: int = 8) -> list[Event]:
    """Events for a mono recording at the profile's sample rate.

    Windows are decoded independently, shifted to their offset, joined where
    they touch across seams, then smoothed over the whole file.
    """
    check_model(net, profile)
    windows = tile_windows(buffer.samples, profile.window_samples)
    outputs = []
    for i in range(0, len(windows), batch_size):
        outputs.append(net.forward(window_features(windows[i:i + batch_size], profile)))
    events = network_events(net, np.concatenate(outputs), profile, threshold)
    if apply_smoothing:
        events = smooth(events, profile.smoothing)
    return _clip(events, buffer.duration)


def load_training_set(manifest, profile: PipelineProfile, out_steps: int,
                      classes: Optional[Sequence[str]] = None, head: str = "yoho"):
    """Features and targets for every clip listed in a manifest.

    ``head="yoho"`` gives flattened regression grids of ``out_steps`` rows;
    ``head="frame"`` gives binary frame targets at the feature hop. Clips
    longer than the profile window are truncated, shorter ones padded.
    """
    classes = list(classes or profile.classes)
    xs, ys = [], []
    for wav, tsv in read_manifest(manifest):
        buf = load_mono(wav, profile.features.sample_rate)
        window = tile_windows(buf.samples, profile.window_samples)[:1]
        xs.append(window_features(window, profile)[0])
        events = _clip(read_events_tsv(tsv), profile.window)
        if head == "frame":
            ys.append(encode_frames(events, out_steps, profile.features.hop, classes))
        else:
            ys.append(encode(events, profile.window, out_steps, classes).flatten())
    return np.stack(xs), np.stack(ys).astype(np.float32)


def _file_duration(ref_dir: Path, stem: str) -> Optional[float]:
    wav = ref_dir / f"{stem}.wav"
    if wav.exists():
        return load_wav(wav).duration
    return None


def evaluate_dirs(ref_dir, est_dir, profile: PipelineProfile,
                  segment_size: Optional[float] = None, durations: Optional[dict] = None,
                  ) -> MetricsReport:
    """Match ``*.tsv`` by file name, accumulate segment counts over all pairs,
    then reduce once.

    A file's duration comes from ``durations[stem]``, else from a WAV of the
    same stem next to the reference TSV, else from the latest offset in the
    pair.
    """
    ref_dir, est_dir = Path(ref_dir), Path(est_dir)
    segment_size = segment_size or profile.segment_size
    refs = {p.stem: p for p in ref_dir.glob("*.tsv")}
    ests = {p.stem: p for p in est_dir.glob("*.tsv")}
    if refs.keys() != ests.keys():
        raise UnmatchedFilesError(refs.keys() - ests.keys(), ests.keys() - refs.keys())
    classes = list(profile.classes)
    total = SegmentCounts.empty(classes)
    for stem in sorted(refs):
        duration = (durations or {}).get(stem) or _file_duration(ref_dir, stem)
        total = total + segment_counts(read_events_tsv(refs[stem]), read_events_tsv(ests[stem]),
                                       segment_size, duration, classes)
    return MetricsReport.from_counts(total, segment_size)


@dataclass
class ModelTiming:
    head: str
    parameters: int
    output_neurons: int
    prediction_s_per_hour: float
    smoothing_s_per_hour: float
    events: int

    @property
    def total_s_per_hour(self) -> float:
        return self.prediction_s_per_hour + self.smoothing_s_per_hour


@dataclass
class BenchReport:
    audio_hours: float
    windows: int
    feature_s_per_hour: float
    models: list = field(default_factory=list)

    def ratio(self, phase: str = "total") -> float:
        yoho, frame = self.models
        attr = f"{phase}_s_per_hour"
        return getattr(frame, attr) / getattr(yoho, attr)

    def to_text(self) -> str:
        lines = [f"audio_hours={self.audio_hours:.4f}", f"windows={self.windows}",
                 f"feature_s_per_hour={self.feature_s_per_hour:.3f}"]
        for m in self.models:
            lines += [f"{m.head}.parameters={m.parameters}",
                      f"{m.head}.output_neurons_per_window={m.output_neurons}",
                      f"{m.head}.prediction_s_per_hour={m.prediction_s_per_hour:.3f}",
                      f"{m.head}.smoothing_s_per_hour={m.smoothing_s_per_hour:.4f}",
                      f"{m.head}.total_s_per_hour={m.total_s_per_hour:.3f}"]
        if len(self.models) == 2:
            for phase in ("prediction", "smoothing", "total"):
                lines.append(f"speedup.{phase}={self.ratio(phase):.2f}")
        return "\n".join(lines) + "\n"


def bench(yoho_net: Network, frame_net: Network, buffers: Sequence[AudioBuffer],
          profile: PipelineProfile, threshold: float = 0.5, batch_size: int = 8) -> BenchReport:
    """Time the prediction and smoothing phases of both models on the same audio.

    Feature extraction is shared and timed once. Everything runs serially in
    the calling thread.
    """
    for net in (yoho_net, frame_net):
        check_model(net, profile)
    if yoho_net.arch.head != "yoho" or frame_net.arch.head != "frame":
        raise ModelMismatchError("bench needs one yoho and one frame checkpoint, in that order")

    t0 = time.perf_counter()
    per_file = [window_features(tile_windows(b.samples, profile.window_samples), profile)
                for b in buffers]
    feature_time = time.perf_counter() - t0
    hours = sum(b.duration for b in buffers) / 3600.0
    n_windows = sum(len(f) for f in per_file)

    report = BenchReport(hours, n_windows, feature_time / hours)
    for net in (yoho_net, frame_net):
        t0 = time.perf_counter()
        outputs = [np.concatenate([net.forward(f[i:i + batch_size])
                                   for i in range(0, len(f), batch_size)]) for f in per_file]
        t_pred = time.perf_counter() - t0
        t0 = time.perf_counter()
        n_events = 0
        for out, buf in zip(outputs, buffers):
            events = smooth(network_events(net, out, profile, threshold), profile.smoothing)
            n_events += len(_clip(events, buf.duration))
        t_smooth = time.perf_counter() - t0
        t_out, width = net.output_shape
        report.models.append(ModelTiming(net.arch.head, net.count_params(), t_out * width,
                                         t_pred / hours, t_smooth / hours, n_events))
    return report
