"""Generator, discriminator, fixed feature network and the training losses."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .autograd import (
    ParamSet, Tensor, clamp, conv2d, conv_params, leaky_relu, linear_params, log, mean,
    norm, relu, sigmoid, square, tsum,
)
from .errors import ParameterError, ShapeError
from .image import clip_unit
from .seeding import rng_for

LOG_EPS = 1e-7
DEFAULT_LAMBDA = 100.0
FEATURE_INPUT_SCALE = 255.0  # feature net sees 0-255 intensities


def to_nchw(images: np.ndarray) -> np.ndarray:
    """(N, H, W, C) or (H, W, C) arrays to (N, C, H, W)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4:
        raise ShapeError(f"expected an image batch, got shape {images.shape}")
    return np.ascontiguousarray(images.transpose(0, 3, 1, 2))


def to_nhwc(batch: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(batch).transpose(0, 2, 3, 1))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Generator:
    """conv-in, residual blocks of two 3x3 convs with relu between and an
    additive skip, conv-out. Stride 1 and padding 1 throughout, no
    activation on the ends so signed detail layers pass through.

    Convolutions carry no bias: a zero detail layer maps to zero and the
    output cannot drift by a constant colour offset.
    """

    def __init__(self, seed: int = 0, width: int = 32, blocks: int = 3, channels: int = 3):
        self.width, self.blocks, self.channels = width, blocks, channels
        rng = rng_for(seed, "generator")
        self.params = ParamSet()
        conv_params(self.params, "conv_in", rng, channels, width, bias=False)
        for i in range(blocks):
            conv_params(self.params, f"block{i}.conv1", rng, width, width, bias=False)
            conv_params(self.params, f"block{i}.conv2", rng, width, width, bias=False)
        conv_params(self.params, "conv_out", rng, width, channels, bias=False)

    def _conv(self, x, name):
        return conv2d(x, self.params[f"{name}.w"], None, stride=1, pad=1)

    def __call__(self, detail) -> Tensor:
        x = _as_tensor(detail)
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"generator expects (N, {self.channels}, H, W), got {x.shape}")
        h = self._conv(x, "conv_in")
        for i in range(self.blocks):
            r = relu(self._conv(h, f"block{i}.conv1"))
            h = h + self._conv(r, f"block{i}.conv2")
        return self._conv(h, "conv_out")

    def set_identity(self):
        """Route input channels straight through: blocks zeroed, centre taps 1."""
        for _, t in self.params.items():
            t.data[...] = 0.0
        for c in range(self.channels):
            self.params["conv_in.w"].data[c, c, 1, 1] = 1.0
            self.params["conv_out.w"].data[c, c, 1, 1] = 1.0


class Discriminator:
    """Three stride-2 3x3 convs with leaky relu (0.2), global mean pool,
    affine to one logit, sigmoid."""

    def __init__(self, seed: int = 0, widths=(16, 32, 64), channels: int = 3):
        self.widths = tuple(widths)
        rng = rng_for(seed, "discriminator")
        self.params = ParamSet()
        c_in = channels
        for i, c_out in enumerate(self.widths):
            conv_params(self.params, f"conv{i}", rng, c_in, c_out)
            c_in = c_out
        linear_params(self.params, "fc", rng, c_in, 1)

    def __call__(self, img) -> Tensor:
        x = _as_tensor(img)
        if x.ndim != 4 or x.shape[2] < 8 or x.shape[3] < 8:
            raise ShapeError(f"discriminator needs (N, C, >=8, >=8) input, got {x.shape}")
        for i in range(len(self.widths)):
            x = leaky_relu(conv2d(x, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"],
                                  stride=2, pad=1), 0.2)
        pooled = mean(x, axis=(2, 3))
        logit = pooled @ self.params["fc.w"] + self.params["fc.b"]
        return sigmoid(logit.reshape(-1))


class FeatureNet:
    """Two 3x3 relu convs with seeded weights that are never trained.

    Stands in for a pretrained perceptual network: the weights enter the
    graph as constants, so gradients reach the input but not the weights.
    """

    def __init__(self, seed: int = 0, widths=(8, 16), channels: int = 3):
        self.widths = tuple(widths)
        rng = rng_for(seed, "features")
        self.params = ParamSet()
        c_in = channels
        for i, c_out in enumerate(self.widths):
            conv_params(self.params, f"conv{i}", rng, c_in, c_out)
            c_in = c_out

    def __call__(self, img) -> Tensor:
        x = _as_tensor(img)
        for i in range(len(self.widths)):
            w = Tensor(self.params[f"conv{i}.w"].data)
            b = Tensor(self.params[f"conv{i}.b"].data)
            x = relu(conv2d(x, w, b, stride=1, pad=1))
        return x


# --- losses ---------------------------------------------------------------------

def _check_same(a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")


def mse_loss(truth, clear) -> Tensor:
    truth, clear = _as_tensor(truth), _as_tensor(clear)
    _check_same(truth, clear)
    return mean(square(truth - clear))


def content_loss(truth, clear, features: Callable[[Tensor], Tensor],
                 scale: float = FEATURE_INPUT_SCALE) -> Tensor:
    """L2 norm of the feature-map difference over the whole batch.

    Images are multiplied by ``scale`` before entering ``features``. The
    norm is not averaged, so its weight against the summed adversarial term
    does not shrink with image size.
    """
    truth, clear = _as_tensor(truth), _as_tensor(clear)
    _check_same(truth, clear)
    return norm(features(truth * scale) - features(clear * scale))


def adversarial_losses(d_truth, d_clear, eps: float = LOG_EPS) -> tuple[Tensor, Tensor]:
    """Discriminator loss ``-sum[log D(truth) + log(1 - D(clear))]`` and the
    non-saturating generator loss ``-sum log D(clear)``."""
    dt = clamp(_as_tensor(d_truth), eps, 1.0 - eps)
    dc = clamp(_as_tensor(d_clear), eps, 1.0 - eps)
    d_loss = -tsum(log(dt) + log(1.0 - dc))
    g_loss = -tsum(log(dc))
    return d_loss, g_loss


def perceptual_loss(truth, clear, d_clear, features, lam: float = DEFAULT_LAMBDA) -> Tensor:
    if lam < 0:
        raise ParameterError(f"lambda must be non-negative, got {lam}")
    content = content_loss(truth, clear, features)
    if lam == 0:
        return content
    _, g_adv = adversarial_losses(d_clear, d_clear)
    return content + lam * g_adv


def reconstruct(base: np.ndarray, detail_prime: np.ndarray) -> np.ndarray:
    base = np.asarray(base, dtype=np.float64)
    detail_prime = np.asarray(detail_prime, dtype=np.float64)
    if base.shape != detail_prime.shape:
        raise ShapeError(f"shape mismatch {base.shape} vs {detail_prime.shape}")
    return clip_unit(base + detail_prime)
