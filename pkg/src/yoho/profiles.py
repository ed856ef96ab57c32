"""Per-task constants: front end, window length, smoothing and evaluation."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .features import ENVIRONMENTAL_FEATURES, MUSIC_SPEECH_FEATURES, FeatureConfig
from .postprocess import ClassRule, SmoothingConfig

__all__ = ["PipelineProfile", "PROFILES", "get_profile", "TUT_CLASSES", "URBAN_SED_CLASSES"]

TUT_CLASSES = ["brakes squeaking", "car", "children", "large vehicle",
               "people speaking", "people walking"]
URBAN_SED_CLASSES = ["air_conditioner", "car_horn", "children_playing", "dog_bark", "drilling",
                     "engine_idling", "gun_shot", "jackhammer", "siren", "street_music"]


@dataclass(frozen=True)
class PipelineProfile:
    name: str
    features: FeatureConfig
    window: float
    windows: tuple
    smoothing: SmoothingConfig
    classes: tuple
    segment_size: float

    @property
    def input_time(self) -> int:
        return self.features.n_frames(self.window_samples)

    @property
    def window_samples(self) -> int:
        return int(round(self.window * self.features.sample_rate))

    def with_window(self, window: float, classes=None) -> "PipelineProfile":
        if window not in self.windows:
            raise ValueError(f"profile {self.name} supports windows {self.windows}")
        return replace(self, window=window, classes=tuple(classes or self.classes))

    def with_classes(self, classes) -> "PipelineProfile":
        return replace(self, classes=tuple(classes))


MUSIC_SPEECH = PipelineProfile(
    name="music-speech",
    features=MUSIC_SPEECH_FEATURES,
    window=8.0,
    windows=(8.0,),
    smoothing=SmoothingConfig({"music": ClassRule(0.8, 3.4), "speech": ClassRule(0.8, 0.8)}),
    classes=("speech", "music"),
    segment_size=0.01,
)

ENVIRONMENTAL = PipelineProfile(
    name="environmental",
    features=ENVIRONMENTAL_FEATURES,
    window=2.56,
    windows=(2.56, 10.0),
    smoothing=SmoothingConfig(default=ClassRule(1.0, None)),
    classes=tuple(TUT_CLASSES),
    segment_size=1.0,
)

PROFILES = {p.name: p for p in (MUSIC_SPEECH, ENVIRONMENTAL)}


def get_profile(name: str) -> PipelineProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
