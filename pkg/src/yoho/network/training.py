"""Adam, SpecAugment and the early-stopping training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..loss import batch_loss_and_grad, frame_bce, frame_bce_grad
from .model import Network

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "Adam", "adam_step", "spec_augment", "train", "History"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    l2_first_conv: float = 0.0
    l2_rest: float = 0.0
    spatial_dropout_rate: float = 0.0
    early_stop_patience: int = 10
    seed: int = 0
    max_epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    # (time_masks, freq_masks, max_time_width, max_freq_width); None disables
    spec_augment: Optional[tuple] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.spatial_dropout_rate < 1:
            raise ValueError("spatial_dropout_rate must be in [0, 1)")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0")

    def arch_options(self) -> dict:
        """Regularisation settings in the form the network builders take."""
        return {"l2_first": self.l2_first_conv, "l2_rest": self.l2_rest,
                "dropout": self.spatial_dropout_rate, "seed": self.seed}


class Adam:
    """Adam with bias correction; moments are kept per named parameter."""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-7):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    @classmethod
    def from_config(cls, config: TrainConfig) -> "Adam":
        return cls(config.learning_rate, config.beta1, config.beta2, config.epsilon)

    def step(self, net: Network, grads: dict, t: int) -> None:
        if t < 1:
            raise ValueError("Adam step index starts at 1")
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for key, layer, name, value in net.named_parameters():
            g = grads[key].astype(np.float64)
            m = self.m.get(key)
            if m is None:
                m = self.m[key] = np.zeros(value.shape)
                self.v[key] = np.zeros(value.shape)
            v = self.v[key]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.epsilon)
            layer.params[name] = (value - update).astype(value.dtype)


def adam_step(net: Network, grads: dict, config: TrainConfig, t: int,
              optimizer: Optional[Adam] = None) -> Adam:
    """One Adam update of ``net`` in place. Pass the returned optimizer back in
    on the next call so the moment estimates carry over."""
    optimizer = optimizer or Adam.from_config(config)
    optimizer.step(net, grads, t)
    return optimizer


def spec_augment(batch: np.ndarray, time_masks: int, freq_masks: int, max_width,
                 rng: np.random.Generator) -> np.ndarray:
    """Mask random time and frequency bands, shared by the whole batch.

    ``max_width`` is ``(max_time_width, max_freq_width)`` (an int applies to
    both). Each mask width is drawn uniformly from ``0..max_width`` and its
    start uniformly from the valid positions. Masked cells are set to the batch
    mean. No time warping. Labels are left untouched.
    """
    if isinstance(max_width, (int, np.integer)):
        max_width = (max_width, max_width)
    tw, fw = max_width
    _, n_time, n_freq = batch.shape
    if (time_masks and tw > n_time) or (freq_masks and fw > n_freq):
        raise ValueError(f"mask width {max_width} exceeds input axes {(n_time, n_freq)}")
    out = batch.copy()
    if not time_masks and not freq_masks:
        return out
    fill = batch.mean(dtype=np.float64).astype(batch.dtype)
    for _ in range(time_masks):
        w = int(rng.integers(0, tw + 1))
        s = int(rng.integers(0, n_time - w + 1))
        out[:, s:s + w, :] = fill
    for _ in range(freq_masks):
        w = int(rng.integers(0, fw + 1))
        s = int(rng.integers(0, n_freq - w + 1))
        out[:, :, s:s + w] = fill
    return out


@dataclass
class History:
    train_loss: list
    val_loss: list
    best_epoch: int
    stopped_early: bool

    def __len__(self):
        return len(self.train_loss)


def _loss_fns(net: Network):
    if net.arch.head == "yoho":
        return batch_loss_and_grad

    def frame(pred, target):
        n = pred.shape[0]
        return frame_bce(pred, target) / n, frame_bce_grad(pred, target) / n
    return frame


def evaluate_loss(net: Network, x: np.ndarray, y: np.ndarray, batch_size: int = 32) -> float:
    loss_fn = _loss_fns(net)
    total = 0.0
    for i in range(0, len(x), batch_size):
        pred = net.forward(x[i:i + batch_size], training=False)
        total += loss_fn(pred, y[i:i + batch_size])[0] * len(pred)
    return total / len(x)


def train(net: Network, dataset, config: TrainConfig, validation,
          on_epoch: Optional[Callable[[int, float, float], None]] = None):
    """Mini-batch Adam with early stopping on validation loss.

    ``dataset`` and ``validation`` are ``(inputs, targets)`` array pairs.
    Training stops once validation loss has not improved for
    ``max(1, early_stop_patience)`` consecutive epochs (or at ``max_epochs``),
    and the best weights are restored. Returns ``(net, history)``.
    """
    x, y = dataset
    vx, vy = validation
    if len(x) == 0 or len(vx) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if len(x) != len(y) or len(vx) != len(vy):
        raise ValueError("inputs and targets differ in length")

    rng = np.random.default_rng(config.seed)
    opt = Adam.from_config(config)
    loss_fn = _loss_fns(net)
    step = 0
    best, best_epoch, best_weights = math.inf, -1, net.get_weights()
    wait = 0
    history = History([], [], -1, False)

    for epoch in range(config.max_epochs):
        order = rng.permutation(len(x))
        running = 0.0
        for i in range(0, len(x), config.batch_size):
            idx = order[i:i + config.batch_size]
            xb = x[idx]
            if config.spec_augment:
                tm, fm, tw, fw = config.spec_augment
                xb = spec_augment(xb, tm, fm, (tw, fw), rng)
            pred = net.forward(xb, training=True)
            loss, grad = loss_fn(pred, y[idx])
            grads = net.backward(grad)
            step += 1
            opt.step(net, grads, step)
            running += (loss + net.l2_penalty()) * len(idx)
        train_loss = running / len(x)
        val_loss = evaluate_loss(net, vx, vy, config.batch_size)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        log.info("epoch %d train %.5f val %.5f", epoch + 1, train_loss, val_loss)
        if on_epoch:
            on_epoch(epoch + 1, train_loss, val_loss)
        if val_loss < best:
            best, best_epoch, best_weights, wait = val_loss, epoch, net.get_weights(), 0
        else:
            wait += 1
            if wait >= max(1, config.early_stop_patience):
                history.stopped_early = True
                break

    net.set_weights(best_weights)
    history.best_epoch = best_epoch
    return net, history
