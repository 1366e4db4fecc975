"""Convolutional building blocks with exact analytic gradients.

Everything is plain numpy. Each layer caches what its backward pass needs
during forward; backward returns the input gradient and stores parameter
gradients on the layer. Transposed convolution is implemented as the exact
adjoint of the strided convolution, so the two share one im2col/col2im core.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError

LEAKY_SLOPE = 0.01
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class LayerSpec:
    """Geometry of one (transposed) convolution."""

    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    output_padding: tuple[int, int] = (0, 0)  # transposed conv only

    def conv_output_hw(self, hw: tuple[int, int]) -> tuple[int, int]:
        out = []
        for size, k, s, p in zip(hw, self.kernel, self.stride, self.padding):
            o = (size + 2 * p - k) // s + 1
            if o < 1:
                raise UsageError(f"layer {self} produces empty output for input {hw}")
            out.append(o)
        return tuple(out)

    def tconv_output_hw(self, hw: tuple[int, int]) -> tuple[int, int]:
        out = []
        for size, k, s, p, op in zip(hw, self.kernel, self.stride, self.padding, self.output_padding):
            if op >= s:
                raise UsageError(f"output_padding {op} must be smaller than stride {s}")
            out.append((size - 1) * s - 2 * p + k + op)
        return tuple(out)

    def validate(self) -> "LayerSpec":
        if min(self.in_channels, self.out_channels) < 1 or min(self.kernel) < 1 or min(self.stride) < 1:
            raise UsageError(f"layer dimensions must be positive: {self}")
        if min(self.padding) < 0 or min(self.output_padding) < 0:
            raise UsageError(f"padding must be non-negative: {self}")
        return self


# ---------------------------------------------------------------------------
# im2col core shared by conv forward / backward and their transposes

def _im2col(xp: np.ndarray, kernel, stride, out_hw) -> np.ndarray:
    """(B, C, Hp, Wp) -> (B, C*kh*kw, ho*wo) patch matrix."""
    b, c = xp.shape[:2]
    (kh, kw), (sh, sw), (ho, wo) = kernel, stride, out_hw
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw]
    return cols.reshape(b, c * kh * kw, ho * wo)


def _col2im(gcols: np.ndarray, in_hw, channels, kernel, stride, padding, out_hw, dtype) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patches back onto the padded plane."""
    b = gcols.shape[0]
    (kh, kw), (sh, sw), (ph, pw), (ho, wo) = kernel, stride, padding, out_hw
    h, w = in_hw
    g6 = gcols.reshape(b, channels, kh, kw, ho, wo)
    gxp = np.zeros((b, channels, h + 2 * ph, w + 2 * pw), dtype=dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += g6[:, :, i, j]
    return gxp[:, :, ph : ph + h, pw : pw + w]


def conv2d(x, w, b, stride, padding):
    """Strided cross-correlation: x (B,Ci,H,W), w (Co,Ci,kh,kw) -> (B,Co,ho,wo)."""
    co, ci, kh, kw = w.shape
    (sh, sw), (ph, pw) = stride, padding
    ho = (x.shape[2] + 2 * ph - kh) // sh + 1
    wo = (x.shape[3] + 2 * pw - kw) // sw + 1
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _im2col(xp, (kh, kw), (sh, sw), (ho, wo))
    y = w.reshape(co, -1) @ cols
    if b is not None:
        y = y + b[:, None]
    return y.reshape(x.shape[0], co, ho, wo), cols


def conv2d_grad_input(gy, w, stride, padding, in_hw):
    """Gradient of conv2d w.r.t. its input; also the transposed-conv forward."""
    co, ci, kh, kw = w.shape
    b = gy.shape[0]
    gy2 = gy.reshape(b, co, -1)
    gcols = w.reshape(co, -1).T @ gy2
    return _col2im(gcols, in_hw, ci, (kh, kw), stride, padding, gy.shape[2:], gy.dtype)


def conv2d_grad_weight(cols, gy, w_shape):
    """Gradient of conv2d w.r.t. the kernel, from cached im2col patches."""
    co = w_shape[0]
    b = gy.shape[0]
    gy2 = gy.reshape(b, co, -1)
    gw = np.einsum("bol,bkl->ok", gy2, cols)
    return gw.reshape(w_shape)


# ---------------------------------------------------------------------------
# layers

class Conv2d:
    def __init__(self, spec: LayerSpec, rng, activation_after: str, dtype):
        spec.validate()
        self.spec = spec
        fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1]
        fan_out = spec.out_channels * spec.kernel[0] * spec.kernel[1]
        bound = _init_bound(activation_after, fan_in, fan_out)
        shape = (spec.out_channels, spec.in_channels, *spec.kernel)
        self.w = rng.uniform(-bound, bound, size=shape).astype(dtype)
        self.b = np.zeros(spec.out_channels, dtype=dtype)
        self.gw = None
        self.gb = None
        self._cols = None
        self._in_hw = None

    def forward(self, x, mode="train", rng=None):
        y, cols = conv2d(x, self.w, self.b, self.spec.stride, self.spec.padding)
        self._cols, self._in_hw = cols, x.shape[2:]
        return y

    def backward(self, gy):
        self.gw = conv2d_grad_weight(self._cols, gy, self.w.shape)
        self.gb = gy.sum(axis=(0, 2, 3))
        return conv2d_grad_input(gy, self.w, self.spec.stride, self.spec.padding, self._in_hw)

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.gw, "b": self.gb}


class ConvTranspose2d:
    """Exact adjoint of Conv2d; weight layout (Cin, Cout, kh, kw)."""

    def __init__(self, spec: LayerSpec, rng, activation_after: str, dtype):
        spec.validate()
        self.spec = spec
        fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1]
        fan_out = spec.out_channels * spec.kernel[0] * spec.kernel[1]
        bound = _init_bound(activation_after, fan_in, fan_out)
        shape = (spec.in_channels, spec.out_channels, *spec.kernel)
        self.w = rng.uniform(-bound, bound, size=shape).astype(dtype)
        self.b = np.zeros(spec.out_channels, dtype=dtype)
        self.gw = None
        self.gb = None
        self._x = None

    def forward(self, x, mode="train", rng=None):
        self._x = x
        out_hw = self.spec.tconv_output_hw(x.shape[2:])
        y = conv2d_grad_input(x, self.w, self.spec.stride, self.spec.padding, out_hw)
        return y + self.b[None, :, None, None]

    def backward(self, gy):
        gx, cols = conv2d(gy, self.w, None, self.spec.stride, self.spec.padding)
        self.gw = conv2d_grad_weight(cols, self._x, self.w.shape)
        self.gb = gy.sum(axis=(0, 2, 3))
        return gx

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.gw, "b": self.gb}


class BatchNorm2d:
    """Per-channel batch norm; running statistics use the biased variance."""

    def __init__(self, channels: int, dtype):
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.ggamma = None
        self.gbeta = None
        self._cache = None

    def forward(self, x, mode="train", rng=None):
        if mode == "train":
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean = ((1 - BN_MOMENTUM) * self.running_mean + BN_MOMENTUM * mean).astype(x.dtype)
            self.running_var = ((1 - BN_MOMENTUM) * self.running_var + BN_MOMENTUM * var).astype(x.dtype)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, mode, x.shape)
        return self.gamma[None, :, None, None] * xhat + self.beta[None, :, None, None]

    def backward(self, gy):
        xhat, inv_std, mode, shape = self._cache
        self.ggamma = (gy * xhat).sum(axis=(0, 2, 3))
        self.gbeta = gy.sum(axis=(0, 2, 3))
        gxhat = gy * self.gamma[None, :, None, None]
        if mode != "train":
            return gxhat * inv_std[None, :, None, None]
        n = shape[0] * shape[2] * shape[3]
        sum_g = gxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        sum_gx = (gxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        return inv_std[None, :, None, None] / n * (n * gxhat - sum_g - xhat * sum_gx)

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.ggamma, "beta": self.gbeta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class Activation:
    NAMES = ("relu", "leaky_relu", "sigmoid", "tanh", "linear")

    def __init__(self, name: str):
        if name not in self.NAMES:
            raise UsageError(f"unknown activation {name!r}; choose from {self.NAMES}")
        self.name = name
        self._cache = None

    def forward(self, x, mode="train", rng=None):
        if self.name == "relu":
            y = np.maximum(x, 0)
            self._cache = x
        elif self.name == "leaky_relu":
            y = np.where(x > 0, x, LEAKY_SLOPE * x)
            self._cache = x
        elif self.name == "sigmoid":
            y = 1.0 / (1.0 + np.exp(-x))
            self._cache = y
        elif self.name == "tanh":
            y = np.tanh(x)
            self._cache = y
        else:
            y = x
        return y

    def backward(self, gy):
        if self.name == "relu":
            return gy * (self._cache > 0)
        if self.name == "leaky_relu":
            return gy * np.where(self._cache > 0, 1.0, LEAKY_SLOPE).astype(gy.dtype)
        if self.name == "sigmoid":
            s = self._cache
            return gy * s * (1.0 - s)
        if self.name == "tanh":
            t = self._cache
            return gy * (1.0 - t * t)
        return gy

    def params(self):
        return {}

    def grads(self):
        return {}


class Dropout:
    """Inverted dropout: active only in train mode, identity otherwise."""

    def __init__(self, rate: float):
        if not (0.0 <= rate < 1.0):
            raise UsageError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x, mode="train", rng=None):
        if mode != "train" or self.rate == 0.0:
            self._mask = None
            return x
        keep = rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, gy):
        if self._mask is None:
            return gy
        return gy * self._mask

    def params(self):
        return {}

    def grads(self):
        return {}


def _init_bound(activation: str, fan_in: int, fan_out: int) -> float:
    """He-uniform bound for ReLU-family activations, Xavier-uniform otherwise."""
    if activation in ("relu", "leaky_relu"):
        return float(np.sqrt(6.0 / fan_in))
    return float(np.sqrt(6.0 / (fan_in + fan_out)))
