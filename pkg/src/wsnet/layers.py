"""Layer units with explicit forward/backward passes.

Every unit exposes ``params`` (learnable arrays, keyed by local name),
``forward(x, train, rng) -> (y, cache)`` and ``backward(dy, cache) -> (dx,
grads)``.  Activations are ``(B, T, M)`` until an fc unit flattens them.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .conv import conv_fast, conv_naive, conv_naive_backward, pointwise_conv
from .sampling import (CondensedFilter, PositionMap, SamplingSpec, fc_condensed_length,
                       fc_position_map, position_map)


def grad_condensed(grad_K, pmap: PositionMap) -> np.ndarray:
    """Sum kernel gradients onto the condensed weights they are tied to."""
    grad_K = np.asarray(grad_K, dtype=np.float64)
    if grad_K.shape != pmap.index.shape:
        raise ValueError(f"kernel gradient shape {grad_K.shape} != position map {pmap.index.shape}")
    size = pmap.condensed_shape[0] * pmap.condensed_shape[1]
    flat = np.bincount(pmap.index.ravel(), weights=grad_K.ravel(), minlength=size)
    return flat.reshape(pmap.condensed_shape)


def cross_entropy(logits, labels) -> float:
    loss, _ = cross_entropy_with_grad(logits, labels)
    return loss


def cross_entropy_with_grad(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    B, K = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_z[:, None]
    loss = -log_p[np.arange(B), labels].mean()
    grad = np.exp(log_p)
    grad[np.arange(B), labels] -= 1.0
    return float(loss), grad / B


class Unit:
    name: str = ""
    params: dict
    buffers: dict

    def __init__(self, name: str):
        self.name = name
        self.params = {}
        self.buffers = {}

    def forward(self, x, train, rng):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError


class SampledConv(Unit):
    """Weight-sampled 1D convolution, optionally followed by a 1x1 reduction."""

    def __init__(self, name: str, spec: SamplingSpec, rng=None, init_std: float = 0.01,
                 fast: bool = False):
        super().__init__(name)
        self.spec = spec
        self.fast = fast
        self.pmap = position_map(spec)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["phi"] = rng.normal(0.0, init_std, spec.shape)
        if spec.D > 1:
            self.params["pointwise"] = rng.normal(0.0, init_std, spec.pointwise_shape)

    def kernel(self) -> np.ndarray:
        return self.params["phi"].ravel()[self.pmap.index]

    def forward(self, x, train, rng):
        spec = self.spec
        if x.shape[-1] != spec.M:
            raise ValueError(f"{self.name}: input has {x.shape[-1]} channels, expected {spec.M}")
        if self.fast:
            z = conv_fast(x, CondensedFilter(self.params["phi"], spec))
        else:
            z = conv_naive(x, self.kernel(), spec.conv_stride, spec.padding)
        if spec.D > 1:
            return pointwise_conv(z, self.params["pointwise"]), (x, z)
        return z, (x, None)

    def backward(self, dy, cache):
        x, z = cache
        spec = self.spec
        grads = {}
        if spec.D > 1:
            W = self.params["pointwise"]
            grads["pointwise"] = (z.reshape(-1, W.shape[1]).T @ dy.reshape(-1, W.shape[2]))[None]
            dy = dy @ W[0].T
        dx, dK = conv_naive_backward(x, self.kernel(), dy, spec.conv_stride, spec.padding)
        grads["phi"] = grad_condensed(dK, self.pmap)
        return dx, grads


class SampledFC(Unit):
    """Fully connected layer whose weight columns are windows of one vector."""

    def __init__(self, name: str, n_in: int, n_out: int, S: int, rng=None,
                 init_std: float = 0.01):
        super().__init__(name)
        self.n_in, self.n_out, self.S = n_in, n_out, S
        self.index = fc_position_map(n_in, n_out, S)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["phi"] = rng.normal(0.0, init_std, fc_condensed_length(n_in, n_out, S))

    def weight(self) -> np.ndarray:
        return self.params["phi"][self.index]

    def forward(self, x, train, rng):
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.n_in:
            raise ValueError(f"{self.name}: flattened input has {flat.shape[1]} values, expected {self.n_in}")
        return flat @ self.weight(), (x.shape, flat)

    def backward(self, dy, cache):
        shape, flat = cache
        dW = flat.T @ dy
        phi = np.bincount(self.index.ravel(), weights=dW.ravel(),
                          minlength=self.params["phi"].size)
        return (dy @ self.weight().T).reshape(shape), {"phi": phi}


class ReLU(Unit):
    def forward(self, x, train, rng):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache):
        return dy * cache, {}


class BatchNorm(Unit):
    """Per-channel normalization over every axis but the last."""

    def __init__(self, name: str, channels: int, eps: float = 1e-5, momentum: float = 0.9):
        super().__init__(name)
        self.eps, self.momentum = eps, momentum
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["mean"] = np.zeros(channels)
        self.buffers["var"] = np.ones(channels)

    def forward(self, x, train, rng):
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.buffers["mean"] *= self.momentum
            self.buffers["mean"] += (1 - self.momentum) * mean
            self.buffers["var"] *= self.momentum
            self.buffers["var"] += (1 - self.momentum) * var
        else:
            mean, var = self.buffers["mean"], self.buffers["var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        return self.params["gamma"] * xhat + self.params["beta"], (xhat, inv_std)

    def backward(self, dy, cache):
        xhat, inv_std = cache
        axes = tuple(range(dy.ndim - 1))
        m = dy.size // dy.shape[-1]
        grads = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
        dxhat = dy * self.params["gamma"]
        dx = inv_std / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        return dx, grads


class MaxPool(Unit):
    """Max pooling with stride 2; output length ``ceil(T / 2)``."""

    stride = 2

    def __init__(self, name: str, k: int):
        super().__init__(name)
        self.k = k

    def forward(self, x, train, rng):
        T = x.shape[1]
        T_out = math.ceil(T / self.stride)
        pad = max((T_out - 1) * self.stride + self.k - T, 0)
        left = pad // 2
        if T + pad < self.k:
            raise ValueError(f"{self.name}: pool window {self.k} larger than padded input {T + pad}")
        xp = np.pad(x, ((0, 0), (left, pad - left), (0, 0)), constant_values=-np.inf)
        windows = sliding_window_view(xp, self.k, axis=1)[:, ::self.stride][:, :T_out]
        arg = windows.argmax(axis=-1)
        y = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
        return y, (x.shape, left, pad, arg)

    def backward(self, dy, cache):
        shape, left, pad, arg = cache
        B, T, M = shape
        T_out = dy.shape[1]
        dxp = np.zeros((B, T + pad, M))
        span = self.stride * (T_out - 1) + 1
        for j in range(self.k):
            dxp[:, j:j + span:self.stride] += np.where(arg == j, dy, 0.0)
        return dxp[:, left:left + T], {}


class Dropout(Unit):
    """Inverted dropout; ``keep`` is the probability of keeping an activation."""

    def __init__(self, name: str, keep: float):
        super().__init__(name)
        self.keep = keep

    def forward(self, x, train, rng):
        if not train or self.keep >= 1.0:
            return x, None
        mask = (rng.random(x.shape) < self.keep) / self.keep
        return x * mask, mask

    def backward(self, dy, cache):
        return (dy if cache is None else dy * cache), {}


class GlobalAvgPool(Unit):
    def forward(self, x, train, rng):
        return x.mean(axis=1), x.shape[1]

    def backward(self, dy, cache):
        return np.repeat(dy[:, None, :] / cache, cache, axis=1), {}
