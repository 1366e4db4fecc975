"""The convolutional VAE: architecture, forward passes, losses, gradients.

The encoder stacks conv -> batch-norm -> activation -> dropout blocks, two
1x1 convolutional heads emit the latent mean and log-variance maps, and the
decoder mirrors the encoder with transposed convolutions. The final decoder
layer is a bare transposed convolution followed by the output activation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, UsageError
from .layers import Activation, BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, LayerSpec

LOG_VAR_CLAMP = 20.0
MAPE_FLOOR = 1e-6
MSLE_FLOOR = -1.0 + 1e-6

RECONSTRUCTION_KINDS = ("mae", "mape", "mse", "msle")


@dataclass(frozen=True)
class LatentDistribution:
    """Diagonal-Gaussian latent parameters (log_var already clamped)."""

    mu: np.ndarray
    log_var: np.ndarray


@dataclass(frozen=True)
class LossParts:
    total: float
    recon: float
    kl: float


@dataclass(frozen=True)
class Architecture:
    input_hw: tuple[int, int]
    encoder: tuple[LayerSpec, ...]
    latent_channels: int
    decoder: tuple[LayerSpec, ...]

    def encoder_shapes(self) -> list[tuple[int, int]]:
        shapes = [self.input_hw]
        for spec in self.encoder:
            shapes.append(spec.conv_output_hw(shapes[-1]))
        return shapes

    def validate(self) -> "Architecture":
        for spec in (*self.encoder, *self.decoder):
            spec.validate()
        shapes = self.encoder_shapes()
        hw = shapes[-1]
        for spec in self.decoder:
            hw = spec.tconv_output_hw(hw)
        if hw != self.input_hw:
            raise UsageError(
                f"decoder restores {hw}, not the encoder input {self.input_hw}; "
                "adjust strides/output_padding"
            )
        if self.decoder[-1].out_channels != self.encoder[0].in_channels:
            raise UsageError("decoder must restore the encoder's input channel count")
        return self


def mirror_decoder(encoder: tuple[LayerSpec, ...], latent_channels: int, input_hw) -> tuple[LayerSpec, ...]:
    """Derive decoder specs that retrace the encoder's spatial chain exactly.

    Each transposed conv reuses the mirrored encoder layer's kernel, stride
    and padding; output_padding is solved per dimension so shapes match.
    """
    shapes = [input_hw]
    for spec in encoder:
        shapes.append(spec.conv_output_hw(shapes[-1]))
    n = len(encoder)
    decoder = []
    for i in range(n):
        enc = encoder[n - 1 - i]
        src, dst = shapes[n - i], shapes[n - 1 - i]
        op = []
        for d in range(2):
            pad = dst[d] - ((src[d] - 1) * enc.stride[d] - 2 * enc.padding[d] + enc.kernel[d])
            if not (0 <= pad < enc.stride[d]):
                raise UsageError(f"cannot mirror encoder layer {enc}: output_padding {pad}")
            op.append(pad)
        in_ch = latent_channels if i == 0 else encoder[n - i].in_channels
        decoder.append(
            LayerSpec(in_ch, enc.in_channels, enc.kernel, enc.stride, enc.padding, tuple(op))
        )
    return tuple(decoder)


def default_architecture(input_hw: tuple[int, int] = (12, 149)) -> Architecture:
    """Four 3x3/stride-2 encoder blocks (16-32-64-128 channels), 32-channel
    latent heads, and the mirrored transposed-conv decoder."""
    channels = (16, 32, 64, 128)
    encoder = []
    prev = 1
    for ch in channels:
        encoder.append(LayerSpec(prev, ch, (3, 3), (2, 2), (1, 1)))
        prev = ch
    encoder = tuple(encoder)
    latent_channels = 32
    decoder = mirror_decoder(encoder, latent_channels, input_hw)
    return Architecture(tuple(input_hw), encoder, latent_channels, decoder).validate()


# ---------------------------------------------------------------------------
# losses

def reconstruction_loss(x: np.ndarray, xhat: np.ndarray, kind: str) -> float:
    """Element-mean reconstruction error of the given kind."""
    if x.shape != xhat.shape:
        raise UsageError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    if kind == "mse":
        return float(np.mean((x - xhat) ** 2))
    if kind == "mae":
        return float(np.mean(np.abs(x - xhat)))
    if kind == "mape":
        return float(np.mean(np.abs(x - xhat) / np.maximum(np.abs(x), MAPE_FLOOR)))
    if kind == "msle":
        lx = np.log1p(np.maximum(x, MSLE_FLOOR))
        lxh = np.log1p(np.maximum(xhat, MSLE_FLOOR))
        return float(np.mean((lx - lxh) ** 2))
    raise UsageError(f"unknown reconstruction loss {kind!r}; choose from {RECONSTRUCTION_KINDS}")


def _reconstruction_grad(x: np.ndarray, xhat: np.ndarray, kind: str) -> np.ndarray:
    """d(element-mean loss)/d(xhat)."""
    n = x.size
    if kind == "mse":
        return 2.0 * (xhat - x) / n
    if kind == "mae":
        return np.sign(xhat - x) / n
    if kind == "mape":
        return np.sign(xhat - x) / np.maximum(np.abs(x), MAPE_FLOOR) / n
    if kind == "msle":
        xh = np.maximum(xhat, MSLE_FLOOR)
        g = 2.0 * (np.log1p(xh) - np.log1p(np.maximum(x, MSLE_FLOOR))) / (1.0 + xh) / n
        return g * (xhat > MSLE_FLOOR)
    raise UsageError(f"unknown reconstruction loss {kind!r}")


def kl_unit_gaussian(mu: np.ndarray, log_var: np.ndarray) -> float:
    """KL(N(mu, exp(log_var)) || N(0, I)) summed over all latent units."""
    if mu.shape != log_var.shape:
        raise UsageError(f"shape mismatch: {mu.shape} vs {log_var.shape}")
    lv = np.clip(log_var, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
    return float(0.5 * np.sum(mu**2 + np.exp(lv) - 1.0 - lv))


def reparameterize(mu: np.ndarray, log_var: np.ndarray, rng=None, eps: np.ndarray | None = None) -> np.ndarray:
    """z = mu + exp(log_var / 2) * eps with eps ~ N(0, I) drawn from rng."""
    lv = np.clip(log_var, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
    if eps is None:
        if rng is None:
            raise UsageError("reparameterize needs either an rng or explicit eps")
        eps = rng.standard_normal(mu.shape).astype(mu.dtype)
    return mu + np.exp(0.5 * lv) * eps


# ---------------------------------------------------------------------------
# the network

class Vae:
    """Parameter container plus forward/backward passes.

    `dtype` is float32 for production training and float64 for gradient
    checks. All randomness (init, dropout masks, latent draws) comes from
    generators passed in by the caller, never from global state.
    """

    def __init__(
        self,
        arch: Architecture,
        hidden_activation: str = "relu",
        output_activation: str = "linear",
        dropout_rate: float = 0.3,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        arch.validate()
        if output_activation not in ("linear", "sigmoid"):
            raise UsageError(f"output activation must be linear or sigmoid, got {output_activation!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.arch = arch
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.dropout_rate = dropout_rate
        self.dtype = np.dtype(dtype)

        self.enc_blocks = []
        for spec in arch.encoder:
            self.enc_blocks.append(
                (
                    Conv2d(spec, rng, hidden_activation, self.dtype),
                    BatchNorm2d(spec.out_channels, self.dtype),
                    Activation(hidden_activation),
                    Dropout(dropout_rate),
                )
            )
        bottleneck = arch.encoder[-1].out_channels
        head_spec = LayerSpec(bottleneck, arch.latent_channels, (1, 1), (1, 1), (0, 0))
        self.mu_head = Conv2d(head_spec, rng, "linear", self.dtype)
        self.logvar_head = Conv2d(head_spec, rng, "linear", self.dtype)

        self.dec_blocks = []
        for i, spec in enumerate(arch.decoder):
            last = i == len(arch.decoder) - 1
            act = Activation(output_activation if last else hidden_activation)
            tconv = ConvTranspose2d(spec, rng, act.name if not last else "linear", self.dtype)
            bn = None if last else BatchNorm2d(spec.out_channels, self.dtype)
            drop = None if last else Dropout(dropout_rate)
            self.dec_blocks.append((tconv, bn, act, drop))

        self._modules = {}
        for i, (conv, bn, act, drop) in enumerate(self.enc_blocks):
            self._modules[f"enc{i}.conv"] = conv
            self._modules[f"enc{i}.bn"] = bn
        self._modules["mu_head"] = self.mu_head
        self._modules["logvar_head"] = self.logvar_head
        for i, (tconv, bn, act, drop) in enumerate(self.dec_blocks):
            self._modules[f"dec{i}.tconv"] = tconv
            if bn is not None:
                self._modules[f"dec{i}.bn"] = bn

    # -- parameter plumbing -------------------------------------------------

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for name, mod in self._modules.items():
            for key, arr in mod.params().items():
                out[f"{name}.{key}"] = arr
        return out

    def named_buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for name, mod in self._modules.items():
            if isinstance(mod, BatchNorm2d):
                for key, arr in mod.buffers().items():
                    out[f"{name}.{key}"] = arr
        return out

    def named_grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, mod in self._modules.items():
            for key, arr in mod.grads().items():
                out[f"{name}.{key}"] = arr
        return out

    def state_snapshot(self) -> dict[str, np.ndarray]:
        state = {k: v.copy() for k, v in self.named_params().items()}
        state.update({k: v.copy() for k, v in self.named_buffers().items()})
        return state

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, mod in self._modules.items():
            for key in mod.params():
                arr = state[f"{name}.{key}"]
                getattr(mod, _ATTR[key])[...] = arr
            if isinstance(mod, BatchNorm2d):
                mod.running_mean = state[f"{name}.running_mean"].astype(self.dtype).copy()
                mod.running_var = state[f"{name}.running_var"].astype(self.dtype).copy()

    # -- forward passes -----------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        expect = (self.arch.encoder[0].in_channels, *self.arch.input_hw)
        if x.shape[1:] != expect:
            raise UsageError(f"input shape {x.shape[1:]} does not match the model's {expect}")
        return x

    def encode(self, x: np.ndarray, mode: str = "eval", rng=None) -> LatentDistribution:
        """Latent mean / log-variance maps; dropout and batch statistics are
        active only in train mode."""
        h = self._check_input(x)
        for conv, bn, act, drop in self.enc_blocks:
            h = drop.forward(act.forward(bn.forward(conv.forward(h), mode)), mode, rng)
        mu = self.mu_head.forward(h)
        log_var = np.clip(self.logvar_head.forward(h), -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
        return LatentDistribution(mu, log_var)

    def decode(self, z: np.ndarray, mode: str = "eval", rng=None) -> np.ndarray:
        z = np.asarray(z, dtype=self.dtype)
        expect = (self.arch.latent_channels, *self.arch.encoder_shapes()[-1])
        if z.shape[1:] != expect:
            raise UsageError(f"latent shape {z.shape[1:]} does not match the model's {expect}")
        h = z
        for tconv, bn, act, drop in self.dec_blocks:
            h = tconv.forward(h)
            if bn is not None:
                h = bn.forward(h, mode)
            h = act.forward(h)
            if drop is not None:
                h = drop.forward(h, mode, rng)
        return h

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """Deterministic eval-mode reconstruction through the latent mean."""
        return self.decode(self.encode(x).mu)

    # -- loss and gradients ---------------------------------------------------

    def loss(self, x: np.ndarray, rng=None, kind: str = "mse", mode: str = "train") -> LossParts:
        """Batch loss: mean over samples of (recon + KL). In eval mode the
        latent mean is used directly (no sampling) and dropout is off."""
        x = self._check_input(x)
        parts, _ = self._forward_loss(x, rng, kind, mode)
        return parts

    def loss_and_grads(self, x: np.ndarray, rng, kind: str = "mse") -> tuple[LossParts, dict]:
        """Train-mode loss plus exact gradients for every parameter."""
        x = self._check_input(x)
        parts, cache = self._forward_loss(x, rng, kind, "train")
        self._backward_loss(x, cache, kind)
        return parts, self.named_grads()

    def _forward_loss(self, x, rng, kind, mode):
        dist = self.encode(x, mode, rng)
        mu, lv = dist.mu, dist.log_var
        if mode == "train":
            eps = rng.standard_normal(mu.shape).astype(self.dtype)
            z = mu + np.exp(0.5 * lv) * eps
        else:
            eps = None
            z = mu
        xhat = self.decode(z, mode, rng)
        b = x.shape[0]
        recon = reconstruction_loss(x, xhat, kind)
        kl = float(0.5 * np.sum(mu**2 + np.exp(lv) - 1.0 - lv) / b)
        total = recon + kl
        if not np.isfinite(total):
            raise NumericalError(f"non-finite loss: recon={recon}, kl={kl}")
        return LossParts(total, recon, kl), (mu, lv, eps, xhat)

    def _backward_loss(self, x, cache, kind):
        mu, lv, eps, xhat = cache
        b = x.shape[0]
        g = _reconstruction_grad(x, xhat, kind).astype(self.dtype)
        for tconv, bn, act, drop in reversed(self.dec_blocks):
            if drop is not None:
                g = drop.backward(g)
            g = act.backward(g)
            if bn is not None:
                g = bn.backward(g)
            g = tconv.backward(g)
        gz = g
        gmu = gz + mu / b
        glv = gz * eps * 0.5 * np.exp(0.5 * lv) + 0.5 * (np.exp(lv) - 1.0) / b
        glv = glv * ((lv > -LOG_VAR_CLAMP) & (lv < LOG_VAR_CLAMP))
        gh = self.mu_head.backward(gmu) + self.logvar_head.backward(glv.astype(self.dtype))
        for conv, bn, act, drop in reversed(self.enc_blocks):
            gh = conv.backward(bn.backward(act.backward(drop.backward(gh))))
        return gh


_ATTR = {"w": "w", "b": "b", "gamma": "gamma", "beta": "beta"}
