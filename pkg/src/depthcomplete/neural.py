"""
Dense layers with hand-written forward and backward passes.

Tensors are plain numpy arrays. Every layer works on a leading batch axis;
the free functions ``fc_forward`` and ``conv2d_forward`` also accept a single
unbatched sample. Parameters are stored in float32 for training; pass
``dtype=np.float64`` when building a network for gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, StateError

DTYPE = np.float32
LEAKY_SLOPE = 0.01

LAYER_KINDS = ("conv2d", "fully_connected", "leaky_relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 1
    stride: int = 1
    padding: int = 0
    in_dim: int = 0
    out_dim: int = 0
    alpha: float = LEAKY_SLOPE

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("leaky relu slope must lie in (0, 1)")
        if self.kind == "conv2d" and (self.in_channels < 1 or self.out_channels < 1):
            raise ValueError("conv2d needs positive channel counts")
        if self.kind == "fully_connected" and (self.in_dim < 1 or self.out_dim < 1):
            raise ValueError("fully_connected needs positive dimensions")

    @classmethod
    def conv2d(cls, in_channels, out_channels, kernel_size, stride=1, padding=0):
        return cls("conv2d", in_channels=in_channels, out_channels=out_channels,
                   kernel_size=kernel_size, stride=stride, padding=padding)

    @classmethod
    def fully_connected(cls, in_dim, out_dim):
        return cls("fully_connected", in_dim=in_dim, out_dim=out_dim)

    @classmethod
    def leaky_relu(cls, alpha=LEAKY_SLOPE):
        return cls("leaky_relu", alpha=alpha)

    @classmethod
    def sigmoid(cls):
        return cls("sigmoid")

    @property
    def weight_shape(self) -> tuple[int, ...] | None:
        if self.kind == "conv2d":
            k = self.kernel_size
            return (self.out_channels, self.in_channels, k, k)
        if self.kind == "fully_connected":
            return (self.out_dim, self.in_dim)
        return None

    @property
    def bias_shape(self) -> tuple[int, ...] | None:
        if self.kind == "conv2d":
            return (self.out_channels,)
        if self.kind == "fully_connected":
            return (self.out_dim,)
        return None

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.kernel_size, self.stride, self.padding
        if h + 2 * p < k:
            raise DimensionError(f"height axis: kernel {k} larger than padded input {h + 2 * p}")
        if w + 2 * p < k:
            raise DimensionError(f"width axis: kernel {k} larger than padded input {w + 2 * p}")
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1


@dataclass
class ParamGroup:
    """Weight and bias of one layer, plus the SGD momentum buffers."""

    name: str
    weight: np.ndarray
    bias: np.ndarray
    trainable: bool = True
    weight_velocity: np.ndarray = field(default=None, repr=False)
    bias_velocity: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.weight_velocity is None:
            self.weight_velocity = np.zeros_like(self.weight)
        if self.bias_velocity is None:
            self.bias_velocity = np.zeros_like(self.bias)

    @property
    def size(self) -> int:
        return int(self.weight.size + self.bias.size)


@dataclass
class Gradient:
    weight: np.ndarray
    bias: np.ndarray


def param_count(groups: Iterable[ParamGroup]) -> int:
    return sum(g.size for g in groups)


def glorot_uniform(shape, fan_in, fan_out, rng, dtype=DTYPE):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_group(name: str, spec: LayerSpec, rng: np.random.Generator, dtype=DTYPE) -> ParamGroup:
    if spec.kind == "conv2d":
        k2 = spec.kernel_size ** 2
        fan_in, fan_out = spec.in_channels * k2, spec.out_channels * k2
    elif spec.kind == "fully_connected":
        fan_in, fan_out = spec.in_dim, spec.out_dim
    else:
        raise ValueError(f"{spec.kind} layers have no parameters")
    weight = glorot_uniform(spec.weight_shape, fan_in, fan_out, rng, dtype)
    return ParamGroup(name, weight, np.zeros(spec.bias_shape, dtype=dtype))


# ---------------------------------------------------------------------------
# functional forms


def fc_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = W x + b over the last axis of ``x`` (any leading batch axes)."""
    x = np.asarray(x)
    if W.ndim != 2:
        raise DimensionError(f"weight must be 2-D, got shape {W.shape}")
    if x.shape[-1] != W.shape[1]:
        raise DimensionError(
            f"input axis -1 has length {x.shape[-1]}, weight expects {W.shape[1]}")
    if b.shape != (W.shape[0],):
        raise DimensionError(f"bias axis 0 has length {b.shape[0]}, weight has {W.shape[0]} rows")
    return x @ W.T + b


def _im2col(x, k, stride, padding):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    return cols, ho, wo


def conv2d_forward(x: np.ndarray, spec: LayerSpec, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Zero-padded cross-correlation. ``x`` is (C, H, W) or (N, C, H, W)."""
    x = np.asarray(x)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be 3-D or 4-D, got {x.ndim}-D")
    if x.shape[1] != spec.in_channels:
        raise DimensionError(
            f"channel axis has length {x.shape[1]}, layer expects {spec.in_channels}")
    if W.shape != spec.weight_shape:
        raise DimensionError(f"weight shape {W.shape} != {spec.weight_shape}")
    spec.output_hw(x.shape[2], x.shape[3])
    cols, ho, wo = _im2col(x, spec.kernel_size, spec.stride, spec.padding)
    out = cols @ W.reshape(spec.out_channels, -1).T + b
    out = out.reshape(x.shape[0], ho, wo, spec.out_channels).transpose(0, 3, 1, 2)
    return out[0] if single else out


def leaky_relu(x: np.ndarray, alpha: float = LEAKY_SLOPE) -> np.ndarray:
    x = np.asarray(x)
    return np.where(x > 0, x, alpha * x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    # exp of a non-positive argument only, so nothing overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


# ---------------------------------------------------------------------------
# layers


class Layer:
    spec: LayerSpec | None = None
    params: ParamGroup | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, Gradient | None]:
        raise NotImplementedError

    def clear(self):
        """Drop cached activations."""


class Conv2D(Layer):
    def __init__(self, spec: LayerSpec, params: ParamGroup):
        self.spec = spec
        self.params = params
        self._cache = None

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise DimensionError(
                f"{self.params.name}: expected (N, {self.spec.in_channels}, H, W), got {x.shape}")
        s = self.spec
        s.output_hw(x.shape[2], x.shape[3])
        cols, ho, wo = _im2col(x, s.kernel_size, s.stride, s.padding)
        wmat = self.params.weight.reshape(s.out_channels, -1)
        out = cols @ wmat.T + self.params.bias
        self._cache = (cols, x.shape, ho, wo)
        return out.reshape(x.shape[0], ho, wo, s.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad):
        if self._cache is None:
            raise StateError(f"{self.params.name}: backward called before forward")
        cols, xshape, ho, wo = self._cache
        s = self.spec
        n, c, h, w = xshape
        k, st, p = s.kernel_size, s.stride, s.padding
        g2 = grad.transpose(0, 2, 3, 1).reshape(-1, s.out_channels)
        if self.params.trainable:
            gw = (g2.T @ cols).reshape(self.params.weight.shape)
            gb = g2.sum(axis=0)
        else:
            gw = np.zeros_like(self.params.weight)
            gb = np.zeros_like(self.params.bias)
        dcols = (g2 @ self.params.weight.reshape(s.out_channels, -1))
        dcols = dcols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
        dx = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + st * ho:st, j:j + st * wo:st] += dcols[:, :, i, j]
        if p:
            dx = dx[:, :, p:p + h, p:p + w]
        return dx, Gradient(gw, gb)

    def clear(self):
        self._cache = None


class FullyConnected(Layer):
    """Acts on the last axis, so a (N, 27, 150) input applies one shared weight to all 27 slices."""

    def __init__(self, spec: LayerSpec, params: ParamGroup):
        self.spec = spec
        self.params = params
        self._x = None

    def forward(self, x):
        if x.shape[-1] != self.spec.in_dim:
            raise DimensionError(
                f"{self.params.name}: input axis -1 has length {x.shape[-1]}, expected {self.spec.in_dim}")
        self._x = x
        return x @ self.params.weight.T + self.params.bias

    def backward(self, grad):
        if self._x is None:
            raise StateError(f"{self.params.name}: backward called before forward")
        x2 = self._x.reshape(-1, self.spec.in_dim)
        g2 = grad.reshape(-1, self.spec.out_dim)
        if self.params.trainable:
            gw = g2.T @ x2
            gb = g2.sum(axis=0)
        else:
            gw = np.zeros_like(self.params.weight)
            gb = np.zeros_like(self.params.bias)
        dx = (g2 @ self.params.weight).reshape(self._x.shape)
        return dx, Gradient(gw, gb)

    def clear(self):
        self._x = None


class LeakyReLU(Layer):
    def __init__(self, spec: LayerSpec | None = None):
        self.spec = spec or LayerSpec.leaky_relu()
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, self.spec.alpha * x)

    def backward(self, grad):
        if self._mask is None:
            raise StateError("leaky_relu: backward called before forward")
        return np.where(self._mask, grad, self.spec.alpha * grad), None

    def clear(self):
        self._mask = None


class Sigmoid(Layer):
    def __init__(self):
        self.spec = LayerSpec.sigmoid()
        self._y = None

    def forward(self, x):
        self._y = sigmoid(x)
        return self._y

    def backward(self, grad):
        if self._y is None:
            raise StateError("sigmoid: backward called before forward")
        return grad * self._y * (1 - self._y), None

    def clear(self):
        self._y = None


class Reshape(Layer):
    """Parameter-free shape change of the non-batch axes."""

    def __init__(self, shape: Sequence[int]):
        self.shape = tuple(shape)
        self._in = None

    def forward(self, x):
        self._in = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad):
        if self._in is None:
            raise StateError("reshape: backward called before forward")
        return grad.reshape(self._in), None

    def clear(self):
        self._in = None


def make_layer(spec: LayerSpec, params: ParamGroup | None = None) -> Layer:
    if spec.kind == "conv2d":
        return Conv2D(spec, params)
    if spec.kind == "fully_connected":
        return FullyConnected(spec, params)
    if spec.kind == "leaky_relu":
        return LeakyReLU(spec)
    return Sigmoid()


class Network:
    """An ordered chain of layers with a single reverse pass."""

    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter group names: {names}")
        self._forwarded = False

    @property
    def groups(self) -> list[ParamGroup]:
        return [layer.params for layer in self.layers if layer.params is not None]

    def group(self, name: str) -> ParamGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers if layer.spec is not None]

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        self._forwarded = True
        return x

    __call__ = forward

    def backward(self, loss_grad: np.ndarray) -> tuple[dict[str, Gradient], np.ndarray]:
        """Gradients for every parameter group (zeros for frozen ones) and for the input."""
        if not self._forwarded:
            raise StateError("backward called before forward")
        grads = {}
        g = loss_grad
        for layer in reversed(self.layers):
            g, pg = layer.backward(g)
            if pg is not None:
                grads[layer.params.name] = pg
        ordered = {grp.name: grads[grp.name] for grp in self.groups}
        return ordered, g

    def clear(self):
        for layer in self.layers:
            layer.clear()
        self._forwarded = False

    def param_count(self) -> int:
        return param_count(self.groups)
