"""WAV decoding, mono downmix and resampling.

Samples are held as float arrays normalised to [-1, 1]. Multi-channel audio is
stored frame-major with shape ``(n_frames, n_channels)``; mono audio is 1-D.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

__all__ = [
    "AudioBuffer",
    "WavError",
    "UnreadableWavError",
    "UnsupportedEncodingError",
    "TruncatedWavError",
    "load_wav",
    "write_wav",
    "downmix_to_mono",
    "resample",
    "load_mono",
]

_PCM = 0x0001
_IEEE_FLOAT = 0x0003
_EXTENSIBLE = 0xFFFE


class WavError(Exception):
    """Base class for WAV decoding failures."""


class UnreadableWavError(WavError):
    """The file is missing, unreadable, or not a RIFF/WAVE container."""


class UnsupportedEncodingError(WavError):
    """The WAV header declares an encoding other than integer PCM or 32-bit float."""


class TruncatedWavError(WavError):
    """The data chunk is shorter than its header claims."""


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("audio samples must be finite")

    @property
    def n_channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def n_frames(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return self.n_frames / self.sample_rate


def _decode_frames(raw: bytes, fmt: int, bits: int) -> np.ndarray:
    if fmt == _IEEE_FLOAT:
        if bits == 32:
            return np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if bits == 64:
            return np.frombuffer(raw, dtype="<f8").copy()
        raise UnsupportedEncodingError(f"unsupported float width: {bits} bits")
    if bits == 8:
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        return v.astype(np.float64) / float(1 << 23)
    if bits == 32:
        return np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)
    raise UnsupportedEncodingError(f"unsupported PCM width: {bits} bits")


def load_wav(path) -> AudioBuffer:
    """Read a RIFF/WAVE file.

    Integer PCM (8/16/24/32-bit) is scaled by its full-scale value, so 16-bit
    audio is divided by 32768. IEEE float data is passed through. Channel count
    and sample rate come from the header; nothing is resampled or downmixed.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise UnreadableWavError(f"cannot read {path}: {exc}") from exc

    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnreadableWavError(f"{path} is not a RIFF/WAVE file")

    fmt_info = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise UnreadableWavError(f"{path}: malformed fmt chunk")
            fmt, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
            if fmt == _EXTENSIBLE:
                if len(body) < 26:
                    raise UnreadableWavError(f"{path}: malformed extensible fmt chunk")
                (fmt,) = struct.unpack("<H", body[24:26])
            if fmt not in (_PCM, _IEEE_FLOAT):
                raise UnsupportedEncodingError(f"{path}: format tag 0x{fmt:04x} is not PCM")
            if channels < 1 or rate < 1:
                raise UnreadableWavError(f"{path}: invalid channel count or rate")
            fmt_info = (fmt, channels, rate, block_align, bits)
        elif chunk_id == b"data":
            if fmt_info is None:
                raise UnreadableWavError(f"{path}: data chunk before fmt chunk")
            if len(body) < size:
                raise TruncatedWavError(
                    f"{path}: data chunk declares {size} bytes, only {len(body)} present")
            fmt, channels, rate, block_align, bits = fmt_info
            frame_bytes = channels * (bits // 8)
            if frame_bytes == 0:
                raise UnreadableWavError(f"{path}: zero-width frames")
            if size % frame_bytes:
                raise TruncatedWavError(f"{path}: data chunk ends mid-frame")
            flat = _decode_frames(body, fmt, bits)
            samples = flat if channels == 1 else flat.reshape(-1, channels)
            return AudioBuffer(samples, rate)
        pos += 8 + size + (size & 1)

    if fmt_info is None:
        raise UnreadableWavError(f"{path}: no fmt chunk")
    raise UnreadableWavError(f"{path}: no data chunk")


def write_wav(path, buffer: AudioBuffer) -> None:
    """Write 16-bit PCM scaled by 32768, the inverse of the reader. Values
    outside the representable range are clipped."""
    samples = np.asarray(buffer.samples, dtype=np.float64)
    ints = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    channels = buffer.n_channels
    payload = ints.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, _PCM, channels, buffer.sample_rate,
        buffer.sample_rate * channels * 2, channels * 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def downmix_to_mono(buffer: AudioBuffer) -> AudioBuffer:
    if buffer.samples.ndim == 1:
        return buffer
    return AudioBuffer(buffer.samples.mean(axis=1), buffer.sample_rate)


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited polyphase resampling.

    Uses a Kaiser-windowed sinc (beta 5.0) anti-aliasing filter. Output length
    is ``round(n * target_rate / sample_rate)``.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == buffer.sample_rate:
        return buffer
    ratio = Fraction(target_rate, buffer.sample_rate)
    n_out = int(round(buffer.n_frames * target_rate / buffer.sample_rate))
    if buffer.n_frames == 0:
        shape = (0,) + buffer.samples.shape[1:]
        return AudioBuffer(np.zeros(shape), target_rate)
    # padtype="line" keeps DC and slow trends intact at the edges
    out = resample_poly(buffer.samples, ratio.numerator, ratio.denominator,
                        axis=0, window=("kaiser", 5.0), padtype="line")
    if out.shape[0] < n_out:
        pad = [(0, n_out - out.shape[0])] + [(0, 0)] * (out.ndim - 1)
        out = np.pad(out, pad, mode="edge")
    return AudioBuffer(out[:n_out], target_rate)


def load_mono(path, target_rate: int) -> AudioBuffer:
    """Load a WAV, downmix, then resample (that order)."""
    return resample(downmix_to_mono(load_wav(path)), target_rate)
