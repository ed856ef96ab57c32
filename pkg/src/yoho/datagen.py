"""Deterministic synthetic clips with exact ground truth.

Two generator kinds are available:

``harmonic``
    A stack of five harmonics on a random fundamental (150-600 Hz) with slow
    vibrato, all energy below ~3.1 kHz. Stands in for music.
``noise``
    White noise band-limited to 3-7 kHz with a 3-6 Hz amplitude flutter.
    Stands in for speech.

Every event gets linear fade-in/out of ``fade`` seconds inside its
annotated span, so the annotation is the true support of the signal.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, write_wav
from .label_codec import Event, read_events_tsv, write_events_tsv

__all__ = ["SynthConfig", "KIND_BANDS", "synth_clip", "synth_dataset", "read_manifest"]

# reference RMS the SNR range is measured against (-40 dBFS)
REF_RMS = 0.01
PEAK_LIMIT = 0.95

# frequency support of each generator kind, Hz
KIND_BANDS = {"harmonic": (140.0, 3100.0), "noise": (3000.0, 7000.0)}


@dataclass(frozen=True)
class SynthConfig:
    clip_duration: float = 8.0
    sample_rate: int = 16000
    # class name -> generator kind
    classes: dict = field(default_factory=lambda: {"speech": "noise", "music": "harmonic"})
    events_per_clip: tuple = (1, 4)
    duration_range: tuple = (0.8, 4.0)
    overlap_allowed: bool = True
    fade: float = 0.05
    snr_range: tuple = (20.0, 30.0)
    # minimum silence between two events of the same class
    min_gap: float = 0.5
    # RMS of white background noise; 0 keeps the background digitally silent
    noise_floor: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.duration_range
        if not 0 < lo <= hi <= self.clip_duration:
            raise ValueError("duration_range must lie within (0, clip_duration]")
        if self.events_per_clip[0] < 0 or self.events_per_clip[0] > self.events_per_clip[1]:
            raise ValueError("events_per_clip must be a non-negative (min, max) pair")
        unknown = set(self.classes.values()) - set(KIND_BANDS)
        if unknown:
            raise ValueError(f"unknown generator kinds {sorted(unknown)}")
        if self.fade < 0 or 2 * self.fade > lo:
            raise ValueError("fade must be >= 0 and fit twice into the shortest event")

    @property
    def class_names(self) -> list:
        return list(self.classes)


def _fits(candidate: Event, placed: list, cfg: SynthConfig) -> bool:
    for ev in placed:
        if ev.class_name == candidate.class_name:
            if candidate.onset < ev.offset + cfg.min_gap and ev.onset < candidate.offset + cfg.min_gap:
                return False
        elif not cfg.overlap_allowed:
            if candidate.onset < ev.offset and ev.onset < candidate.offset:
                return False
    return True


def _render(kind: str, n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / sr
    if kind == "harmonic":
        f0 = rng.uniform(150.0, 600.0)
        vib = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(4.0, 6.0) * t)
        phase = 2 * np.pi * f0 * np.cumsum(vib) / sr
        amps = 0.7 ** np.arange(5)
        return sum(a * np.sin((h + 1) * phase + rng.uniform(0, 2 * np.pi))
                   for h, a in enumerate(amps))
    lo, hi = KIND_BANDS["noise"]
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    sig = np.fft.irfft(spec, n)
    flutter = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(3.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    return sig * flutter


def synth_clip(config: SynthConfig, index: int):
    """Render clip ``index``; returns ``(AudioBuffer, events)``.

    Output depends only on ``(config, index)``.
    """
    rng = np.random.default_rng([config.seed, index])
    sr = config.sample_rate
    n_total = int(round(config.clip_duration * sr))
    audio = np.zeros(n_total)
    if config.noise_floor > 0:
        audio += config.noise_floor * rng.standard_normal(n_total)

    names = config.class_names
    n_events = int(rng.integers(config.events_per_clip[0], config.events_per_clip[1] + 1))
    placed: list[Event] = []
    for _ in range(n_events):
        for _attempt in range(50):
            name = names[int(rng.integers(len(names)))]
            dur = float(rng.uniform(*config.duration_range))
            onset = float(rng.uniform(0.0, config.clip_duration - dur))
            # snap to the sample grid so annotation and audio agree exactly
            onset = round(onset * sr) / sr
            offset = min(config.clip_duration, round((onset + dur) * sr) / sr)
            cand = Event(name, onset, offset)
            if _fits(cand, placed, config):
                placed.append(cand)
                break

    for ev in placed:
        a, b = int(round(ev.onset * sr)), int(round(ev.offset * sr))
        sig = _render(config.classes[ev.class_name], b - a, sr, rng)
        sig *= REF_RMS * 10 ** (rng.uniform(*config.snr_range) / 20) / (np.sqrt(np.mean(sig ** 2)) + 1e-12)
        nf = int(round(config.fade * sr))
        if nf:
            ramp = np.linspace(0.0, 1.0, nf, endpoint=False)
            sig[:nf] *= ramp
            sig[-nf:] *= ramp[::-1]
        audio[a:b] += sig

    peak = np.max(np.abs(audio)) if n_total else 0.0
    if peak > PEAK_LIMIT:
        audio *= PEAK_LIMIT / peak
    events = sorted(placed, key=lambda e: (e.onset, e.class_name))
    return AudioBuffer(audio, sr), events


def synth_dataset(config: SynthConfig, n_clips: int, out_dir, prefix: str = "clip") -> Path:
    """Write ``n_clips`` WAV/TSV pairs plus ``manifest.tsv`` into ``out_dir``.

    Manifest lines are ``wav_path<TAB>tsv_path`` relative to ``out_dir``.
    Returns the manifest path.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"{out} is not writable")
    except OSError as exc:
        raise OSError(f"cannot write dataset to {out}: {exc}") from exc
    rows = []
    for i in range(n_clips):
        audio, events = synth_clip(config, i)
        wav, tsv = f"{prefix}_{i:05d}.wav", f"{prefix}_{i:05d}.tsv"
        write_wav(out / wav, audio)
        write_events_tsv(out / tsv, events)
        rows.append(f"{wav}\t{tsv}\n")
    manifest = out / "manifest.tsv"
    manifest.write_text("".join(rows), encoding="utf-8")
    return manifest


def read_manifest(path) -> list:
    """``[(wav_path, tsv_path)]`` with paths resolved against the manifest's folder."""
    base = Path(path).parent
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        wav, tsv = line.split("\t")
        pairs.append((base / wav, base / tsv))
    return pairs


def checksum(buffer: AudioBuffer) -> str:
    return hashlib.sha256(np.ascontiguousarray(buffer.samples).tobytes()).hexdigest()
