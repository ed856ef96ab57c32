"""Log-mel spectrogram front end and the binary feature cache."""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from .audio_io import AudioBuffer

__all__ = [
    "FeatureConfig",
    "MelSpectrogram",
    "MUSIC_SPEECH_FEATURES",
    "ENVIRONMENTAL_FEATURES",
    "hz_to_mel",
    "mel_to_hz",
    "stft_magnitude",
    "mel_filterbank",
    "log_mel",
    "save_features",
    "load_features",
]

_CACHE_MAGIC = b"YMEL"
_CACHE_VERSION = 1


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int
    window: float
    hop: float
    n_mels: int
    fmin: float
    fmax: float
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        # fmin == 0 is allowed: the environmental front end starts at 0 Hz
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ValueError(
                f"need 0 <= fmin < fmax <= Nyquist, got fmin={self.fmin} fmax={self.fmax}")
        if self.hop > self.window or self.hop <= 0:
            raise ValueError("need 0 < hop <= window")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def window_samples(self) -> int:
        return int(round(self.window * self.sample_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop * self.sample_rate))

    @property
    def fft_size(self) -> int:
        return _next_pow2(self.window_samples)

    def n_frames(self, n_samples: int) -> int:
        return n_samples // self.hop_samples + 1


MUSIC_SPEECH_FEATURES = FeatureConfig(16000, 0.025, 0.010, 64, 125.0, 7500.0)
ENVIRONMENTAL_FEATURES = FeatureConfig(44100, 0.040, 0.010, 40, 0.0, 22050.0)


@dataclass
class MelSpectrogram:
    values: np.ndarray
    config: FeatureConfig

    @property
    def shape(self):
        return self.values.shape


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def hz_to_mel(f):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def stft_magnitude(samples, window_samples: int, hop_samples: int) -> np.ndarray:
    """Hann-windowed, reflect-centred STFT magnitudes, shape ``(frames, fft/2 + 1)``.

    The FFT size is the next power of two >= ``window_samples``; the window is
    zero-padded symmetrically to that size. Frames are centred on multiples of
    the hop, giving ``len(samples) // hop + 1`` frames. An empty input yields a
    single all-zero frame.
    """
    if not window_samples >= hop_samples >= 1:
        raise ValueError("need window_samples >= hop_samples >= 1")
    x = np.asarray(samples, dtype=np.float64)
    n_fft = _next_pow2(window_samples)
    n_frames = len(x) // hop_samples + 1
    pad = n_fft // 2
    if len(x) > 1:
        padded = np.pad(x, pad, mode="reflect")
    else:
        padded = np.pad(x, pad, mode="constant")

    # periodic Hann, as used by most ML audio front ends
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window_samples) / window_samples)
    lpad = (n_fft - window_samples) // 2
    full_win = np.zeros(n_fft)
    full_win[lpad:lpad + window_samples] = win

    starts = np.arange(n_frames) * hop_samples
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[starts]
    return np.abs(np.fft.rfft(frames * full_win, axis=1))


def mel_filterbank(config: FeatureConfig, n_fft_bins: int) -> np.ndarray:
    """Triangular HTK-scale filters, shape ``(n_mels, n_fft_bins)``, unnormalised."""
    nyquist = config.sample_rate / 2.0
    if config.fmax > nyquist:
        raise ValueError(f"fmax {config.fmax} exceeds Nyquist {nyquist}")
    bin_hz = np.linspace(0.0, nyquist, n_fft_bins)
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax),
                                  config.n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz - lower) / (center - lower)
    falling = (upper - bin_hz) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.sum(axis=1) <= 0)
    if empty.size:
        raise ValueError(
            f"{config.n_mels} mel bands is too many for {n_fft_bins} FFT bins: "
            f"bands {empty.tolist()} cover no bin")
    return fb


def log_mel(buffer: AudioBuffer, config: FeatureConfig) -> MelSpectrogram:
    if buffer.sample_rate != config.sample_rate:
        raise ValueError(
            f"audio is {buffer.sample_rate} Hz but features expect {config.sample_rate} Hz")
    if buffer.samples.ndim != 1:
        raise ValueError("log_mel expects mono audio")
    mag = stft_magnitude(buffer.samples, config.window_samples, config.hop_samples)
    fb = mel_filterbank(config, mag.shape[1])
    values = np.log(mag ** 2 @ fb.T + config.log_floor)
    return MelSpectrogram(values, config)


def _config_block(config: FeatureConfig) -> bytes:
    return "\n".join(f"{k}={v!r}" for k, v in asdict(config).items()).encode("utf-8")


def _parse_config_block(block: bytes) -> FeatureConfig:
    types = {f.name: f.type for f in fields(FeatureConfig)}
    kwargs = {}
    for line in block.decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        if key not in types:
            raise ValueError(f"unknown feature config key {key!r}")
        kwargs[key] = int(value) if types[key] in ("int", int) else float(value)
    return FeatureConfig(**kwargs)


def save_features(path, spec: MelSpectrogram) -> None:
    """Write the little-endian ``YMEL`` cache format."""
    rows, cols = spec.values.shape
    block = _config_block(spec.config)
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<III", _CACHE_VERSION, rows, cols))
        fh.write(struct.pack("<I", len(block)))
        fh.write(block)
        fh.write(np.ascontiguousarray(spec.values, dtype="<f4").tobytes())


def load_features(path) -> MelSpectrogram:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _CACHE_MAGIC:
        raise ValueError(f"{path} is not a feature cache file")
    version, rows, cols = struct.unpack("<III", data[4:16])
    if version != _CACHE_VERSION:
        raise ValueError(f"unsupported feature cache version {version}")
    (blen,) = struct.unpack("<I", data[16:20])
    config = _parse_config_block(data[20:20 + blen])
    body = data[20 + blen:]
    if len(body) != rows * cols * 4:
        raise ValueError(f"{path}: expected {rows * cols} floats, found {len(body) // 4}")
    values = np.frombuffer(body, dtype="<f4").reshape(rows, cols).copy()
    return MelSpectrogram(values, config)
