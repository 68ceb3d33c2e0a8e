"""Dense float64 tensors with layer-wise reverse-mode gradients.

Tensors are plain numpy arrays (row-major, 64-bit). A Model is an
ordered list of layers whose I/O shapes are validated at construction;
forward is pure unless intermediates are recorded for a backward pass.
The layer set is deliberately small: convolutions with same padding,
ReLU, fully connected, and global average pooling cover the desk-scale
denoisers and classifiers trained here.
"""

from __future__ import annotations

import hashlib
import math
import re

import numpy as np

from .. import rng
from ..errors import ShapeError, StateError
from ._fastconv import conv_same_nhwc


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by max subtraction."""
    logits = as_tensor(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _kaiming_uniform(gen: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return gen.uniform(-bound, bound, size=shape)


class Conv2D:
    """3x3-style convolution, stride 1, zero 'same' padding (odd kernels only)."""

    def __init__(self, kernel: int, in_channels: int, out_channels: int, padding: str = "same"):
        if kernel < 1 or kernel % 2 == 0:
            raise ShapeError(f"Conv2D kernel must be odd and positive, got {kernel}")
        if padding != "same":
            raise ShapeError(f"only 'same' padding is supported, got {padding!r}")
        self.kernel = kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.weight = np.zeros((out_channels, in_channels, kernel, kernel))
        self.bias = np.zeros(out_channels)

    def init_params(self, gen: np.random.Generator) -> None:
        fan_in = self.in_channels * self.kernel * self.kernel
        self.weight[...] = _kaiming_uniform(gen, self.weight.shape, fan_in)
        self.bias[...] = 0.0

    def params(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def descriptor(self) -> str:
        return f"Conv2D({self.kernel},{self.in_channels},{self.out_channels},same)"

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(f"Conv2D expects ({self.in_channels},H,W) input, got {in_shape}")
        return (self.out_channels, in_shape[1], in_shape[2])

    def _wmat(self) -> np.ndarray:
        # weight is stored (out, in, k, k); the gemm wants (k*k*in, out)
        # matching the (ky, kx, channel) order of the column gather.
        return np.ascontiguousarray(
            self.weight.transpose(2, 3, 1, 0).reshape(-1, self.out_channels)
        )

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        # x is channels-last (B, H, W, C); one strided gather, one gemm.
        b, h, w, c = x.shape
        k = self.kernel
        p = k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        s0, s1, s2, s3 = xp.strides
        view = np.lib.stride_tricks.as_strided(
            xp,
            shape=(b, h, w, k, k, c),
            strides=(s0, s1, s2, s1, s2, s3),
            writeable=False,
        )
        return view.reshape(b * h * w, k * k * c)

    def forward(self, x: np.ndarray, record: bool):
        if not record and conv_same_nhwc is not None:
            # inference fast path; training keeps im2col for the gradient cache
            w_khwc = np.ascontiguousarray(self.weight.transpose(2, 3, 1, 0))
            return conv_same_nhwc(x, w_khwc, self.bias), None
        b, h, w, _ = x.shape
        cols = self._im2col(x)
        y = cols @ self._wmat() + self.bias
        cache = (cols, x.shape) if record else None
        return y.reshape(b, h, w, self.out_channels), cache

    def backward(self, dy: np.ndarray, cache):
        cols, x_shape = cache
        b, h, w, c = x_shape
        k = self.kernel
        p = k // 2
        dy2 = dy.reshape(b * h * w, self.out_channels)
        d_wmat = cols.T @ dy2  # (k*k*c, out)
        d_weight = d_wmat.reshape(k, k, c, self.out_channels).transpose(3, 2, 0, 1)
        d_bias = dy2.sum(axis=0)
        dcols = (dy2 @ self._wmat().T).reshape(b, h, w, k, k, c)
        dxp = np.zeros((b, h + 2 * p, w + 2 * p, c))
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + h, j : j + w, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, p : p + h, p : p + w, :]
        return dx, {"weight": d_weight, "bias": d_bias}


class ReLU:
    def init_params(self, gen: np.random.Generator) -> None:
        pass

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def descriptor(self) -> str:
        return "ReLU"

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def forward(self, x: np.ndarray, record: bool):
        y = np.maximum(x, 0.0)
        cache = (x > 0.0) if record else None
        return y, cache

    def backward(self, dy: np.ndarray, cache):
        return dy * cache, {}


class Linear:
    """Fully connected layer; flattens any trailing input dimensions."""

    def __init__(self, in_features: int, out_features: int):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = np.zeros((out_features, in_features))
        self.bias = np.zeros(out_features)

    def init_params(self, gen: np.random.Generator) -> None:
        self.weight[...] = _kaiming_uniform(gen, self.weight.shape, self.in_features)
        self.bias[...] = 0.0

    def params(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def descriptor(self) -> str:
        return f"Linear({self.in_features},{self.out_features})"

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if int(np.prod(in_shape)) != self.in_features:
            raise ShapeError(f"Linear expects {self.in_features} features, got {in_shape}")
        return (self.out_features,)

    def forward(self, x: np.ndarray, record: bool):
        if x.ndim == 4:  # channels-last feature map: flatten in (C,H,W) order
            flat = x.transpose(0, 3, 1, 2).reshape(x.shape[0], -1)
        else:
            flat = x.reshape(x.shape[0], -1)
        y = flat @ self.weight.T + self.bias
        cache = (flat, x.shape) if record else None
        return y, cache

    def backward(self, dy: np.ndarray, cache):
        flat, x_shape = cache
        d_weight = dy.T @ flat
        d_bias = dy.sum(axis=0)
        dx = dy @ self.weight
        if len(x_shape) == 4:
            b, h, w, c = x_shape
            dx = dx.reshape(b, c, h, w).transpose(0, 2, 3, 1)
        else:
            dx = dx.reshape(x_shape)
        return dx, {"weight": d_weight, "bias": d_bias}


class GlobalAvgPool:
    def init_params(self, gen: np.random.Generator) -> None:
        pass

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def descriptor(self) -> str:
        return "GlobalAvgPool"

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 3:
            raise ShapeError(f"GlobalAvgPool expects (C,H,W) input, got {in_shape}")
        return (in_shape[0],)

    def forward(self, x: np.ndarray, record: bool):
        y = x.mean(axis=(1, 2))  # channels-last (B,H,W,C) -> (B,C)
        cache = x.shape if record else None
        return y, cache

    def backward(self, dy: np.ndarray, cache):
        b, h, w, c = cache
        dx = np.broadcast_to(dy[:, None, None, :] / (h * w), (b, h, w, c)).copy()
        return dx, {}


Layer = Conv2D | ReLU | Linear | GlobalAvgPool


class Model:
    """An ordered layer stack with named parameters and matching gradients.

    With residual=True the model computes x - stack(x), the usual
    formulation for denoisers that predict the noise rather than the
    image; the stack's output shape must then equal the input shape.
    """

    def __init__(self, layers: list, input_shape: tuple[int, ...], residual: bool = False):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.residual = bool(residual)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.output_shape = shape
        if self.residual and self.output_shape != self.input_shape:
            raise ShapeError(
                f"residual model must preserve shape, got {self.input_shape} -> {self.output_shape}"
            )
        self.params: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                self.params[f"layer{i}.{name}"] = arr
        self.grads: dict[str, np.ndarray] = {
            name: np.zeros_like(arr) for name, arr in self.params.items()
        }
        self._tape = None

    def init_params(self, seed: int) -> "Model":
        gen = rng.generator(seed, rng.DOMAIN_INIT)
        for layer in self.layers:
            layer.init_params(gen)
        return self

    def descriptor(self) -> str:
        shape = "x".join(str(d) for d in self.input_shape)
        layers = "|".join(layer.descriptor() for layer in self.layers)
        return f"input={shape};residual={int(self.residual)};layers={layers}"

    @staticmethod
    def _to_internal(x: np.ndarray) -> np.ndarray:
        # feature maps run channels-last internally; vectors pass through
        return x.transpose(0, 2, 3, 1) if x.ndim == 4 else x

    @staticmethod
    def _to_external(x: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(x.transpose(0, 3, 1, 2)) if x.ndim == 4 else x

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        x = as_tensor(x)
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"expected batch of shape (B,{','.join(map(str, self.input_shape))}), got {x.shape}"
            )
        caches = [] if record else None
        y = self._to_internal(x)
        x_internal = y
        for layer in self.layers:
            y, cache = layer.forward(y, record)
            if record:
                caches.append(cache)
        if self.residual:
            y = x_internal - y
        if record:
            self._tape = caches
        return self._to_external(y)

    def backward(self, loss_grad: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the gradient w.r.t. the input."""
        if self._tape is None:
            raise StateError("backward requires a preceding forward(..., record=True)")
        dy = self._to_internal(as_tensor(loss_grad))
        d_stack = -dy if self.residual else dy
        for i in range(len(self.layers) - 1, -1, -1):
            d_stack, layer_grads = self.layers[i].backward(d_stack, self._tape[i])
            for name, g in layer_grads.items():
                self.grads[f"layer{i}.{name}"] += g
        dx = dy + d_stack if self.residual else d_stack
        return self._to_external(dx)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)] or [np.zeros(0)])

    def param_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.descriptor().encode())
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()


_CONV_RE = re.compile(r"^Conv2D\((\d+),(\d+),(\d+),same\)$")
_LINEAR_RE = re.compile(r"^Linear\((\d+),(\d+)\)$")


def layer_from_descriptor(text: str):
    if text == "ReLU":
        return ReLU()
    if text == "GlobalAvgPool":
        return GlobalAvgPool()
    m = _CONV_RE.match(text)
    if m:
        return Conv2D(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    m = _LINEAR_RE.match(text)
    if m:
        return Linear(int(m.group(1)), int(m.group(2)))
    raise ShapeError(f"unknown layer descriptor: {text!r}")


def model_from_descriptor(text: str) -> Model:
    fields = dict(part.split("=", 1) for part in text.split(";"))
    input_shape = tuple(int(d) for d in fields["input"].split("x"))
    residual = fields["residual"] == "1"
    layer_field = fields["layers"]
    layers = [layer_from_descriptor(t) for t in layer_field.split("|")] if layer_field else []
    return Model(layers, input_shape, residual=residual)


def build_denoiser(
    channels: int, height: int, width: int, hidden: int = 16, depth: int = 4, seed: int = 0
) -> Model:
    """Residual conv denoiser: `depth` 3x3 convs of `hidden` channels with ReLUs."""
    if depth < 2:
        raise ShapeError("denoiser needs at least input and output convolutions")
    layers: list = [Conv2D(3, channels, hidden), ReLU()]
    for _ in range(depth - 2):
        layers += [Conv2D(3, hidden, hidden), ReLU()]
    layers.append(Conv2D(3, hidden, channels))
    return Model(layers, (channels, height, width), residual=True).init_params(seed)


def build_classifier(
    channels: int,
    height: int,
    width: int,
    num_classes: int,
    widths: tuple[int, ...] = (16, 32),
    seed: int = 0,
) -> Model:
    """Small conv classifier: conv/ReLU stages, global average pool, linear head."""
    layers: list = []
    prev = channels
    for w in widths:
        layers += [Conv2D(3, prev, w), ReLU()]
        prev = w
    layers += [GlobalAvgPool(), Linear(prev, num_classes)]
    return Model(layers, (channels, height, width)).init_params(seed)
