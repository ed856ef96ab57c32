"""NHWC layers with hand-written forward and backward passes.

Every layer exposes ``params`` and ``grads`` dicts keyed by parameter name,
``forward(x, training)`` and ``backward(dy) -> dx``. ``backward`` must follow a
``forward`` call made with ``training=True``; the activations it needs are
cached on the layer.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Layer",
    "Conv2D",
    "DepthwiseConv2D",
    "BatchNorm",
    "ReLU",
    "Sigmoid",
    "MaxPoolFreq",
    "SpatialDropout",
    "AddChannel",
    "FlattenFreq",
    "Conv1D",
    "same_padding",
]


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """TensorFlow-style "same" padding: ``(out, pad_before, pad_after)``."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


class Layer:
    kind = "layer"
    l2 = 0.0
    # parameters not trained by the optimizer (batch-norm running stats)
    buffers: tuple[str, ...] = ()

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}: backward called without a training forward pass")
        return self._cache

    def trainable(self):
        return {k: v for k, v in self.params.items() if k not in self.buffers}

    def __repr__(self):
        shapes = ", ".join(f"{k}={v.shape}" for k, v in self.params.items())
        return f"{type(self).__name__}({shapes})"


def _he_uniform(rng, shape, fan_in, dtype):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D(Layer):
    """Dense 2-D convolution with "same" padding. Kernel layout ``(kh, kw, cin, cout)``."""

    kind = "conv2d"

    def __init__(self, cin, cout, kernel=(3, 3), stride=(1, 1), l2=0.0,
                 rng=None, dtype=np.float32):
        super().__init__()
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        self.l2 = l2
        rng = rng or np.random.default_rng(0)
        kh, kw = self.kernel
        self.params["kernel"] = _he_uniform(rng, (kh, kw, cin, cout), kh * kw * cin, dtype)
        self.params["bias"] = np.zeros(cout, dtype=dtype)

    def output_shape(self, shape):
        h, w, _ = shape
        ho = same_padding(h, self.kernel[0], self.stride[0])[0]
        wo = same_padding(w, self.kernel[1], self.stride[1])[0]
        return (ho, wo, self.params["kernel"].shape[3])

    def _pointwise(self):
        return self.kernel == (1, 1) and self.stride == (1, 1)

    def forward(self, x, training=False):
        k = self.params["kernel"]
        cin, cout = k.shape[2], k.shape[3]
        if self._pointwise():
            y = x.reshape(-1, cin) @ k.reshape(cin, cout)
            y = y.reshape(x.shape[:3] + (cout,)) + self.params["bias"]
            self._cache = x if training else None
            return y
        cols, meta = self._im2col(x)
        y = cols @ k.reshape(-1, cout)
        n, ho, wo = meta[0], meta[1], meta[2]
        y = y.reshape(n, ho, wo, cout) + self.params["bias"]
        self._cache = (cols, meta) if training else None
        return y

    def _im2col(self, x):
        n, h, w, c = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        ho, ph0, ph1 = same_padding(h, kh, sh)
        wo, pw0, pw1 = same_padding(w, kw, sw)
        xp = np.pad(x, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0)))
        patches = [xp[:, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw, :]
                   for i in range(kh) for j in range(kw)]
        cols = np.stack(patches, axis=3).reshape(n * ho * wo, kh * kw * c)
        return cols, (n, ho, wo, x.shape, xp.shape, (ph0, pw0))

    def backward(self, dy):
        cache = self._need_cache()
        k = self.params["kernel"]
        cin, cout = k.shape[2], k.shape[3]
        dy2 = dy.reshape(-1, cout)
        self.grads["bias"] = dy2.sum(axis=0, dtype=np.float64).astype(k.dtype)
        if self._pointwise():
            x = cache
            self.grads["kernel"] = (x.reshape(-1, cin).T @ dy2).reshape(k.shape)
            return (dy2 @ k.reshape(cin, cout).T).reshape(x.shape)
        cols, (n, ho, wo, xshape, xpshape, (ph0, pw0)) = cache
        self.grads["kernel"] = (cols.T @ dy2).reshape(k.shape)
        kh, kw = self.kernel
        sh, sw = self.stride
        dcols = (dy2 @ k.reshape(-1, cout).T).reshape(n, ho, wo, kh, kw, cin)
        dxp = np.zeros(xpshape, dtype=dy.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw, :] += dcols[:, :, :, i, j, :]
        return dxp[:, ph0:ph0 + xshape[1], pw0:pw0 + xshape[2], :]


class DepthwiseConv2D(Layer):
    """Per-channel 2-D convolution, kernel layout ``(kh, kw, channels)``."""

    kind = "depthwise_conv2d"

    def __init__(self, channels, kernel=(3, 3), stride=(1, 1), l2=0.0,
                 rng=None, dtype=np.float32):
        super().__init__()
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        self.l2 = l2
        rng = rng or np.random.default_rng(0)
        kh, kw = self.kernel
        self.params["kernel"] = _he_uniform(rng, (kh, kw, channels), kh * kw, dtype)
        self.params["bias"] = np.zeros(channels, dtype=dtype)

    def output_shape(self, shape):
        h, w, c = shape
        return (same_padding(h, self.kernel[0], self.stride[0])[0],
                same_padding(w, self.kernel[1], self.stride[1])[0], c)

    def _geometry(self, shape):
        _, h, w, _ = shape
        ho, ph0, ph1 = same_padding(h, self.kernel[0], self.stride[0])
        wo, pw0, pw1 = same_padding(w, self.kernel[1], self.stride[1])
        return ho, wo, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0))

    def forward(self, x, training=False):
        k = self.params["kernel"]
        kh, kw = self.kernel
        sh, sw = self.stride
        ho, wo, pads = self._geometry(x.shape)
        xp = np.pad(x, pads)
        y = np.empty((x.shape[0], ho, wo, x.shape[3]), dtype=x.dtype)
        y[...] = self.params["bias"]
        for i in range(kh):
            for j in range(kw):
                y += xp[:, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw, :] * k[i, j]
        self._cache = (xp, x.shape) if training else None
        return y

    def backward(self, dy):
        xp, xshape = self._need_cache()
        k = self.params["kernel"]
        kh, kw = self.kernel
        sh, sw = self.stride
        ho, wo, pads = self._geometry(xshape)
        dk = np.empty(k.shape, dtype=np.float64)
        dxp = np.zeros(xp.shape, dtype=dy.dtype)
        c = k.shape[2]
        dy2 = dy.reshape(-1, c)
        for i in range(kh):
            for j in range(kw):
                sl = (slice(None), slice(i, i + sh * (ho - 1) + 1, sh),
                      slice(j, j + sw * (wo - 1) + 1, sw), slice(None))
                patch = xp[sl]
                dk[i, j] = np.einsum("nc,nc->c", patch.reshape(-1, c), dy2)
                dxp[sl] += dy * k[i, j]
        self.grads["kernel"] = dk.astype(k.dtype)
        self.grads["bias"] = dy2.sum(axis=0, dtype=np.float64).astype(k.dtype)
        ph0, pw0 = pads[1][0], pads[2][0]
        return dxp[:, ph0:ph0 + xshape[1], pw0:pw0 + xshape[2], :]


class BatchNorm(Layer):
    """Batch normalisation over every axis but the last."""

    kind = "batch_norm"
    buffers = ("moving_mean", "moving_var")

    def __init__(self, channels, momentum=0.99, eps=1e-3, dtype=np.float32):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.params["moving_mean"] = np.zeros(channels, dtype=dtype)
        self.params["moving_var"] = np.ones(channels, dtype=dtype)
        self.updates = 0

    def forward(self, x, training=False):
        gamma, beta = self.params["gamma"], self.params["beta"]
        if not training:
            inv = 1.0 / np.sqrt(self.params["moving_var"] + self.eps)
            scale = (gamma * inv).astype(x.dtype)
            shift = (beta - self.params["moving_mean"] * gamma * inv).astype(x.dtype)
            self._cache = None
            return x * scale + shift
        axes = tuple(range(x.ndim - 1))
        mean = x.mean(axis=axes, dtype=np.float64)
        var = np.square(x - mean.astype(x.dtype)).mean(axis=axes, dtype=np.float64)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.astype(x.dtype)) * inv.astype(x.dtype)
        # bias-corrected EMA: the first update adopts the batch statistics,
        # later ones approach the plain momentum average
        self.updates += 1
        rate = (1 - self.momentum) / (1 - self.momentum ** self.updates)
        dt = self.params["moving_mean"].dtype
        mm, mv = self.params["moving_mean"], self.params["moving_var"]
        self.params["moving_mean"] = (mm + rate * (mean - mm)).astype(dt)
        self.params["moving_var"] = (mv + rate * (var - mv)).astype(dt)
        self._cache = (xhat, inv.astype(x.dtype))
        return xhat * gamma + beta

    def backward(self, dy):
        xhat, inv = self._need_cache()
        axes = tuple(range(dy.ndim - 1))
        count = dy.size // dy.shape[-1]
        gamma = self.params["gamma"]
        dbeta = dy.sum(axis=axes, dtype=np.float64)
        dgamma = (dy * xhat).sum(axis=axes, dtype=np.float64)
        self.grads["gamma"] = dgamma.astype(gamma.dtype)
        self.grads["beta"] = dbeta.astype(gamma.dtype)
        scale = (gamma * inv).astype(dy.dtype)
        mean_dy = (dbeta / count).astype(dy.dtype)
        mean_dy_xhat = (dgamma / count).astype(dy.dtype)
        return scale * (dy - mean_dy - xhat * mean_dy_xhat)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        mask = x > 0
        self._cache = mask if training else None
        return x * mask

    def backward(self, dy):
        return dy * self._need_cache()


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, training=False):
        # split by sign so exp never overflows
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        self._cache = y if training else None
        return y

    def backward(self, dy):
        y = self._need_cache()
        return dy * y * (1.0 - y)


class MaxPoolFreq(Layer):
    """Max-pool of size (1, 2) along the frequency axis, "same" padding."""

    kind = "max_pool2d"

    def output_shape(self, shape):
        h, w, c = shape
        return (h, -(-w // 2), c)

    def forward(self, x, training=False):
        n, h, w, c = x.shape
        if w % 2:
            x = np.concatenate([x, np.full((n, h, 1, c), -np.inf, dtype=x.dtype)], axis=2)
        pairs = x.reshape(n, h, x.shape[2] // 2, 2, c)
        pick = pairs[:, :, :, 1, :] > pairs[:, :, :, 0, :]
        y = np.where(pick, pairs[:, :, :, 1, :], pairs[:, :, :, 0, :])
        self._cache = (pick, w) if training else None
        return y

    def backward(self, dy):
        pick, w = self._need_cache()
        n, h, wo, c = dy.shape
        dx = np.zeros((n, h, wo, 2, c), dtype=dy.dtype)
        dx[:, :, :, 0, :] = np.where(pick, 0, dy)
        dx[:, :, :, 1, :] = np.where(pick, dy, 0)
        return dx.reshape(n, h, wo * 2, c)[:, :, :w, :]


class SpatialDropout(Layer):
    """Drops whole channels per example during training; identity at inference."""

    kind = "spatial_dropout"

    def __init__(self, rate, rng=None):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng or np.random.default_rng(0)

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._cache = None if not training else 1.0
            return x
        keep = self.rng.random((x.shape[0],) + (1,) * (x.ndim - 2) + (x.shape[-1],)) >= self.rate
        mask = keep.astype(x.dtype) / (1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._need_cache()


class AddChannel(Layer):
    """``(n, time, mels)`` -> ``(n, time, mels, 1)``."""

    kind = "reshape"

    def output_shape(self, shape):
        return tuple(shape) + (1,)

    def forward(self, x, training=False):
        self._cache = True if training else None
        return x[..., None]

    def backward(self, dy):
        self._need_cache()
        return dy[..., 0]


class FlattenFreq(Layer):
    """``(n, time, freq, ch)`` -> ``(n, time, freq * ch)``, row-major."""

    kind = "reshape"

    def output_shape(self, shape):
        h, w, c = shape
        return (h, w * c)

    def forward(self, x, training=False):
        self._cache = x.shape if training else None
        return x.reshape(x.shape[0], x.shape[1], -1)

    def backward(self, dy):
        return dy.reshape(self._need_cache())


class Conv1D(Layer):
    """Kernel-width-1 temporal convolution: a dense map applied at every step."""

    kind = "conv1d"

    def __init__(self, cin, cout, l2=0.0, rng=None, dtype=np.float32):
        super().__init__()
        self.l2 = l2
        rng = rng or np.random.default_rng(0)
        self.params["kernel"] = _he_uniform(rng, (1, cin, cout), cin, dtype)
        self.params["bias"] = np.zeros(cout, dtype=dtype)

    def output_shape(self, shape):
        return (shape[0], self.params["kernel"].shape[2])

    def forward(self, x, training=False):
        self._cache = x if training else None
        return x @ self.params["kernel"][0] + self.params["bias"]

    def backward(self, dy):
        x = self._need_cache()
        k = self.params["kernel"]
        cin, cout = k.shape[1], k.shape[2]
        dy2 = dy.reshape(-1, cout)
        self.grads["kernel"] = (x.reshape(-1, cin).T @ dy2).reshape(k.shape)
        self.grads["bias"] = dy2.sum(axis=0, dtype=np.float64).astype(k.dtype)
        return dy @ k[0].T
