from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import (AddChannel, BatchNorm, Conv1D, Conv2D, DepthwiseConv2D, FlattenFreq,
                     MaxPoolFreq, ReLU, Sigmoid, SpatialDropout)
from .model import ArchConfig, Network, build_frame_cnn, build_network, build_yoho, yoho_output_steps
from .training import Adam, History, TrainConfig, adam_step, spec_augment, train

__all__ = [
    "AddChannel", "BatchNorm", "Conv1D", "Conv2D", "DepthwiseConv2D", "FlattenFreq",
    "MaxPoolFreq", "ReLU", "Sigmoid", "SpatialDropout",
    "ArchConfig", "Network", "build_frame_cnn", "build_network", "build_yoho",
    "yoho_output_steps", "Adam", "History", "TrainConfig", "adam_step", "spec_augment",
    "train", "CheckpointError", "load_checkpoint", "save_checkpoint",
]
