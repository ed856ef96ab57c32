"""MobileNet-style YOHO network and its frame-classification twin."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import (AddChannel, BatchNorm, Conv1D, Conv2D, DepthwiseConv2D, FlattenFreq,
                     Layer, MaxPoolFreq, ReLU, Sigmoid, SpatialDropout)

__all__ = ["ArchConfig", "Network", "build_yoho", "build_frame_cnn", "build_network",
           "MIN_INPUT_TIME", "yoho_output_steps"]

MIN_INPUT_TIME = 32
N_HALVINGS = 5

# (pointwise filters, depthwise stride) after the 32-filter stride-2 stem
_BACKBONE = [(64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2)]
_REPEAT = (512, 1)
_TAIL = [(1024, 2), (1024, 1)]
# layers appended to MobileNet; all stride 1
_HEAD = [(512, 1), (256, 1), (128, 1)]


def yoho_output_steps(input_time: int) -> int:
    t = input_time
    for _ in range(N_HALVINGS):
        t = -(-t // 2)
    return t


@dataclass(frozen=True)
class ArchConfig:
    head: str  # "yoho" or "frame"
    input_time: int
    n_mels: int
    n_classes: int
    width: float = 1.0
    repeats: int = 5
    l2_first: float = 0.0
    l2_rest: float = 0.0
    dropout: float = 0.0
    seed: int = 0

    def stages(self):
        """``[(filters, stride)]`` for every depthwise-separable block."""
        blocks = _BACKBONE + [_REPEAT] * self.repeats + _TAIL + _HEAD
        return [(self.scale(f), s) for f, s in blocks]

    def scale(self, filters: int) -> int:
        return max(1, int(round(filters * self.width)))


class Network:
    def __init__(self, layers: list[Layer], arch: ArchConfig):
        self.layers = layers
        self.arch = arch

    @property
    def n_classes(self) -> int:
        return self.arch.n_classes

    @property
    def input_shape(self) -> tuple[int, int]:
        return (self.arch.input_time, self.arch.n_mels)

    @property
    def output_shape(self) -> tuple[int, int]:
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    @property
    def dtype(self):
        for layer in self.layers:
            for p in layer.params.values():
                return p.dtype
        return np.float32

    def named_parameters(self, trainable_only=True):
        for i, layer in enumerate(self.layers):
            src = layer.trainable() if trainable_only else layer.params
            for name, value in src.items():
                yield f"{i:03d}.{layer.kind}.{name}", layer, name, value

    def count_params(self, trainable_only=True) -> int:
        return int(sum(v.size for *_, v in self.named_parameters(trainable_only)))

    def forward(self, batch: np.ndarray, training: bool = False) -> np.ndarray:
        batch = np.asarray(batch)
        if batch.ndim != 3 or batch.shape[1:] != self.input_shape:
            raise ValueError(
                f"expected batch of shape (B, {self.input_shape[0]}, {self.input_shape[1]}), "
                f"got {batch.shape}")
        x = batch.astype(self.dtype, copy=False)
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    __call__ = forward

    def backward(self, loss_grad: np.ndarray) -> dict[str, np.ndarray]:
        """Backpropagate ``loss_grad`` and return gradients keyed by parameter name.

        L2 penalties are included: a layer with coefficient ``l2`` contributes
        ``2 * l2 * kernel`` to its kernel gradient.
        """
        dy = np.asarray(loss_grad, dtype=self.dtype)
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        grads = {}
        for key, layer, name, value in self.named_parameters():
            g = layer.grads[name]
            if name == "kernel" and layer.l2:
                g = g + (2.0 * layer.l2) * value
                layer.grads[name] = g
            grads[key] = g
        return grads

    def l2_penalty(self) -> float:
        return float(sum(layer.l2 * np.sum(np.square(layer.params["kernel"], dtype=np.float64))
                         for layer in self.layers if layer.l2))

    def get_weights(self) -> dict[str, np.ndarray]:
        return {key: v.copy() for key, _, _, v in self.named_parameters(trainable_only=False)}

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        for key, layer, name, value in self.named_parameters(trainable_only=False):
            w = weights[key]
            if w.shape != value.shape:
                raise ValueError(f"{key}: shape {w.shape} != {value.shape}")
            layer.params[name] = w.astype(value.dtype, copy=True)

    def summary(self) -> str:
        lines = []
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = layer.output_shape(shape)
            n = sum(v.size for v in layer.trainable().values())
            lines.append(f"{i:3d} {layer.kind:18s} {str(shape):22s} {n:>10d}")
        lines.append(f"trainable parameters: {self.count_params()}")
        return "\n".join(lines)


def build_network(arch: ArchConfig, dtype=np.float32) -> Network:
    if arch.head not in ("yoho", "frame"):
        raise ValueError(f"unknown head {arch.head!r}")
    if arch.input_time < MIN_INPUT_TIME:
        raise ValueError(
            f"input_time {arch.input_time} is too short for {N_HALVINGS} halvings "
            f"(need >= {MIN_INPUT_TIME})")
    if arch.n_mels < 1 or arch.n_classes < 1:
        raise ValueError("n_mels and n_classes must be positive")

    rng = np.random.default_rng(arch.seed)
    frame = arch.head == "frame"
    layers: list[Layer] = [AddChannel()]

    def strided(stride):
        return (1, 1) if frame else (stride, stride)

    def post(channels, stride, drop):
        layers.append(BatchNorm(channels, dtype=dtype))
        layers.append(ReLU())
        if frame and stride == 2:
            layers.append(MaxPoolFreq())
        if drop and arch.dropout > 0:
            layers.append(SpatialDropout(arch.dropout, rng=np.random.default_rng(rng.integers(2**32))))

    stem = arch.scale(32)
    layers.append(Conv2D(1, stem, (3, 3), strided(2), l2=arch.l2_first, rng=rng, dtype=dtype))
    post(stem, 2, drop=False)
    channels = stem
    for filters, stride in arch.stages():
        layers.append(DepthwiseConv2D(channels, (3, 3), strided(stride), rng=rng, dtype=dtype))
        post(channels, stride, drop=False)
        layers.append(Conv2D(channels, filters, (1, 1), (1, 1), l2=arch.l2_rest, rng=rng, dtype=dtype))
        post(filters, 1, drop=True)
        channels = filters

    layers.append(FlattenFreq())
    freq = arch.n_mels
    for _ in range(N_HALVINGS):
        freq = -(-freq // 2)
    outputs = arch.n_classes * (1 if frame else 3)
    layers.append(Conv1D(freq * channels, outputs, rng=rng, dtype=dtype))
    layers.append(Sigmoid())
    return Network(layers, arch)


def build_yoho(input_time: int, n_mels: int, n_classes: int, dtype=np.float32,
               **options) -> Network:
    """Regression network: output ``(ceil^5(input_time / 2), 3 * n_classes)``.

    ``options`` are forwarded to :class:`ArchConfig` (``width``, ``repeats``,
    ``l2_first``, ``l2_rest``, ``dropout``, ``seed``).
    """
    return build_network(ArchConfig("yoho", input_time, n_mels, n_classes, **options), dtype)


def build_frame_cnn(input_time: int, n_mels: int, n_classes: int, dtype=np.float32,
                    **options) -> Network:
    """Frame-classification baseline sharing the YOHO layer stack.

    Every stride-2 convolution runs at stride 1 and is followed by a (1, 2)
    max-pool, so time resolution is kept and the output is
    ``(input_time, n_classes)`` frame probabilities.
    """
    return build_network(ArchConfig("frame", input_time, n_mels, n_classes, **options), dtype)
