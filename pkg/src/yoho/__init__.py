"""You-Only-Hear-Once sound event detection: regression of per-step class
presence and boundaries, with the front end, metrics and tooling around it."""

from .audio_io import AudioBuffer, downmix_to_mono, load_mono, load_wav, resample, write_wav
from .features import FeatureConfig, MelSpectrogram, log_mel
from .label_codec import (Event, YohoGrid, decode, encode, encode_frames, read_events_tsv,
                          write_events_tsv)
from .loss import LossBreakdown, yoho_loss, yoho_loss_grad
from .metrics import MetricsReport, class_wise_f1, error_rate, segment_f1, segmentize
from .postprocess import ClassRule, SmoothingConfig, smooth
from .pipeline import bench, evaluate_dirs, predict_events
from .profiles import PROFILES, PipelineProfile, get_profile

__version__ = "0.1.0"
