"""Differentiable layers with explicit reverse passes.

Each layer caches what it needs from ``forward`` and exposes ``backward``,
which takes the gradient w.r.t. the layer output, accumulates parameter
gradients into ``Parameter.grad`` and returns the gradient w.r.t. the input.
Arrays are float64 numpy arrays; batch is always the leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, ParameterError
from .rng import SeededRng


@dataclass
class Parameter:
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    moment1: np.ndarray = field(init=False)
    moment2: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.moment1 = np.zeros_like(self.value)
        self.moment2 = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def zero_grad(self):
        self.grad.fill(0.0)


def uniform_init(rng: SeededRng, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(shape, -bound, bound)


class Layer:
    def params(self) -> dict[str, Parameter]:
        return {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, training=False):
        return self.forward(x, training)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: SeededRng | None = None):
        if n_in <= 0 or n_out <= 0:
            raise ParameterError(f"dense dims must be positive, got {n_in}x{n_out}")
        w = uniform_init(rng, (n_in, n_out), n_in) if rng is not None else np.zeros((n_in, n_out))
        self.W = Parameter(w)
        self.b = Parameter(np.zeros(n_out))
        self._x = None

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, training=False):
        return dense(x, self.W, self.b, cache=self)

    def backward(self, grad):
        x = self._x
        self.W.grad += x.T @ grad
        self.b.grad += grad.sum(axis=0)
        return grad @ self.W.value.T


def dense(x: np.ndarray, W: Parameter, b: Parameter, cache: Dense | None = None) -> np.ndarray:
    """out[b, o] = sum_i x[b, i] * W[i, o] + bias[o]."""
    if x.ndim != 2:
        raise DimensionError(f"dense expects a 2-d input (batch, features), got shape {x.shape}")
    if x.shape[1] != W.shape[0]:
        raise DimensionError(
            f"dense: input axis 1 has size {x.shape[1]} but weights axis 0 has size {W.shape[0]}"
        )
    if b.shape != (W.shape[1],):
        raise DimensionError(
            f"dense: bias axis 0 has size {b.shape[0]} but weights axis 1 has size {W.shape[1]}"
        )
    if cache is not None:
        cache._x = x
    return x @ W.value + b.value


class Conv1d(Layer):
    """Cross-correlation over the time axis of a (batch, channels, time) input."""

    def __init__(self, n_in: int, n_filters: int, kernel: int, padding: str = "same",
                 rng: SeededRng | None = None):
        if padding not in ("same", "valid"):
            raise ParameterError(f"padding must be 'same' or 'valid', got {padding!r}")
        if min(n_in, n_filters, kernel) <= 0:
            raise ParameterError("conv1d dims must be positive")
        fan_in = n_in * kernel
        shape = (n_filters, n_in, kernel)
        w = uniform_init(rng, shape, fan_in) if rng is not None else np.zeros(shape)
        self.W = Parameter(w)
        self.b = Parameter(np.zeros(n_filters))
        self.padding = padding
        self._cols = None
        self._in_shape = None

    def params(self):
        return {"W": self.W, "b": self.b}

    def _pads(self):
        k = self.W.shape[2]
        if self.padding == "valid":
            return 0, 0
        left = (k - 1) // 2
        return left, k - 1 - left

    def forward(self, x, training=False):
        if x.ndim != 3:
            raise DimensionError(f"conv1d expects (batch, channels, time), got shape {x.shape}")
        n_filters, n_in, k = self.W.shape
        if x.shape[1] != n_in:
            raise DimensionError(
                f"conv1d: input axis 1 (channels) is {x.shape[1]} but kernels expect {n_in}"
            )
        left, right = self._pads()
        if left or right:
            x = np.pad(x, ((0, 0), (0, 0), (left, right)))
        if k > x.shape[2]:
            raise DimensionError(
                f"conv1d: kernel length {k} exceeds padded input length {x.shape[2]} on axis 2"
            )
        b, _, t_pad = x.shape
        t_out = t_pad - k + 1
        # im2col: one row per (batch, output step), one column per (channel, tap)
        cols = sliding_window_view(x, k, axis=2).transpose(0, 2, 1, 3).reshape(b * t_out, n_in * k)
        self._cols = cols
        self._in_shape = x.shape
        out = cols @ self.W.value.reshape(n_filters, -1).T  # (B*T', F)
        out = out.reshape(b, t_out, n_filters).transpose(0, 2, 1) + self.b.value[None, :, None]
        return np.ascontiguousarray(out)

    def backward(self, grad):
        n_filters, n_in, k = self.W.shape
        b, t_out = grad.shape[0], grad.shape[2]
        g2 = grad.transpose(0, 2, 1).reshape(b * t_out, n_filters)
        self.W.grad += (g2.T @ self._cols).reshape(self.W.shape)
        self.b.grad += grad.sum(axis=(0, 2))
        # input gradient: full correlation of grad with the time-flipped kernels
        gp = np.pad(grad, ((0, 0), (0, 0), (k - 1, k - 1)))
        t_in = self._in_shape[2]
        gcols = sliding_window_view(gp, k, axis=2).transpose(0, 2, 1, 3).reshape(b * t_in, n_filters * k)
        w_flip = self.W.value[:, :, ::-1].transpose(0, 2, 1).reshape(n_filters * k, n_in)
        dx = (gcols @ w_flip).reshape(b, t_in, n_in).transpose(0, 2, 1)
        left, right = self._pads()
        if left or right:
            dx = dx[:, :, left:dx.shape[2] - right]
        return dx


class MaxPool1d(Layer):
    """Non-overlapping max pooling; trailing ``T mod window`` samples are dropped."""

    def __init__(self, window: int):
        if window <= 0:
            raise ParameterError(f"pool window must be >= 1, got {window}")
        self.window = window
        self.argmax = None
        self._in_shape = None

    def forward(self, x, training=False):
        b, c, t = x.shape
        w = self.window
        n = t // w
        blocks = x[:, :, :n * w].reshape(b, c, n, w)
        self.argmax = blocks.argmax(axis=3)
        self._in_shape = x.shape
        return np.take_along_axis(blocks, self.argmax[..., None], axis=3)[..., 0]

    def backward(self, grad):
        b, c, t = self._in_shape
        w = self.window
        n = grad.shape[2]
        blocks = np.zeros((b, c, n, w))
        np.put_along_axis(blocks, self.argmax[..., None], grad[..., None], axis=3)
        dx = np.zeros(self._in_shape)
        dx[:, :, :n * w] = blocks.reshape(b, c, n * w)
        return dx


class Upsample1d(Layer):
    """Nearest-neighbour repetition along time."""

    def __init__(self, factor: int):
        if factor <= 0:
            raise ParameterError(f"upsample factor must be >= 1, got {factor}")
        self.factor = factor

    def forward(self, x, training=False):
        return np.repeat(x, self.factor, axis=2)

    def backward(self, grad):
        b, c, t = grad.shape
        return grad.reshape(b, c, t // self.factor, self.factor).sum(axis=3)


class ReLU(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.2):
        self.slope = slope

    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, grad):
        return np.where(self._mask, grad, self.slope * grad)


class Sigmoid(Layer):
    def forward(self, x, training=False):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out
        return out

    def backward(self, grad):
        return grad * self._out * (1.0 - self._out)


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    def forward(self, x, training=False):
        self._out = softmax(x)
        return self._out

    def backward(self, grad):
        s = self._out
        return s * (grad - (grad * s).sum(axis=-1, keepdims=True))


class Dropout(Layer):
    """Inverted dropout; identity unless ``training`` is set."""

    def __init__(self, rate: float, rng: SeededRng):
        if not 0.0 <= rate < 1.0:
            raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._mask = None

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask


class Flatten(Layer):
    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Reshape(Layer):
    def __init__(self, *shape: int):
        self.shape = shape

    def forward(self, x, training=False):
        self._in = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad):
        return grad.reshape(self._in)


class Sequential(Layer):
    def __init__(self, layers: list[tuple[str, Layer]]):
        self.layers = layers

    def params(self):
        out = {}
        for name, layer in self.layers:
            for pname, p in layer.params().items():
                out[f"{name}.{pname}"] = p
        return out

    def forward(self, x, training=False):
        for _, layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, grad):
        for _, layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


def parameter_count(params: dict[str, Parameter]) -> int:
    return sum(p.size for p in params.values())


def zero_grads(params) -> None:
    for p in (params.values() if isinstance(params, dict) else params):
        p.zero_grad()
