"""Self-guided edge-preserving filter and the base/detail decomposition.

The fast path uses summed-area tables; ``box_filter_naive`` and
``guided_filter_naive`` enumerate every window explicitly and serve as
reference implementations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError
from .image import as_image

DEFAULT_RADIUS = 10
DEFAULT_EPS = 10.0 / 255.0**2

@dataclass(frozen=True)
class FilterParams:
    radius: int = DEFAULT_RADIUS
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ParameterError(f"radius must be an integer >= 1, got {self.radius}")
        if not self.eps > 0:
            raise ParameterError(f"eps must be positive, got {self.eps}")


class Decomposition(NamedTuple):
    base: np.ndarray
    detail: np.ndarray


def _window_bounds(n: int, radius: int):
    idx = np.arange(n)
    lo = np.maximum(idx - radius, 0)
    hi = np.minimum(idx + radius, n - 1) + 1
    return lo, hi


def _box_sum_mean(x: np.ndarray, radius: int) -> np.ndarray:
    h, w = x.shape[:2]
    sat = np.zeros((h + 1, w + 1) + x.shape[2:])
    sat[1:, 1:] = x.cumsum(0).cumsum(1)
    r0, r1 = _window_bounds(h, radius)
    c0, c1 = _window_bounds(w, radius)
    total = (sat[r1][:, c1] - sat[r0][:, c1]) - (sat[r1][:, c0] - sat[r0][:, c0])
    count = np.outer(r1 - r0, c1 - c0).astype(np.float64)
    if x.ndim == 3:
        count = count[:, :, None]
    return total / count


def box_filter(img: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)^2 window clipped to the image bounds.

    Border pixels divide by the number of pixels actually inside the
    window. Each channel is shifted by its first pixel before summing,
    which makes constant images come back bit-exact.
    """
    if radius < 1:
        raise ParameterError(f"radius must be >= 1, got {radius}")
    x = np.asarray(img, dtype=np.float64)
    shift = x[0, 0]
    return shift + _box_sum_mean(x - shift, radius)


def box_filter_naive(img: np.ndarray, radius: int) -> np.ndarray:
    x = np.asarray(img, dtype=np.float64)
    h, w = x.shape[:2]
    out = np.empty_like(x)
    for i in range(h):
        for j in range(w):
            win = x[max(i - radius, 0):i + radius + 1, max(j - radius, 0):j + radius + 1]
            out[i, j] = win.sum(axis=(0, 1)) / (win.shape[0] * win.shape[1])
    return out


def guided_filter_self(img: np.ndarray, params: FilterParams = FilterParams()) -> np.ndarray:
    """Guided filter with the input acting as its own guide, per channel."""
    p = as_image(img)
    radius, eps = params.radius, params.eps
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    mean = box_filter(p, radius)
    # variance is shift invariant; centring on the first pixel keeps flat
    # regions exactly zero
    centred = p - p[0, 0]
    var = box_filter(centred * centred, radius) - (mean - p[0, 0]) ** 2
    a = var / (var + eps)
    b = (1.0 - a) * mean
    return box_filter(a, radius) * p + box_filter(b, radius)


def guided_filter_naive(img: np.ndarray, radius: int, eps: float) -> np.ndarray:
    """Reference guided filter built from explicit per-window loops."""
    p = as_image(img)
    h, w, c = p.shape
    a = np.empty_like(p)
    b = np.empty_like(p)
    for i in range(h):
        for j in range(w):
            win = p[max(i - radius, 0):i + radius + 1, max(j - radius, 0):j + radius + 1]
            n = win.shape[0] * win.shape[1]
            mu = win.sum(axis=(0, 1)) / n
            var = ((win - mu) ** 2).sum(axis=(0, 1)) / n
            a[i, j] = var / (var + eps)
            b[i, j] = (1.0 - a[i, j]) * mu
    out = np.empty_like(p)
    for i in range(h):
        for j in range(w):
            sl = (slice(max(i - radius, 0), i + radius + 1), slice(max(j - radius, 0), j + radius + 1))
            n = a[sl].shape[0] * a[sl].shape[1]
            out[i, j] = a[sl].sum(axis=(0, 1)) / n * p[i, j] + b[sl].sum(axis=(0, 1)) / n
    return out


def decompose(img: np.ndarray, params: FilterParams = FilterParams()) -> Decomposition:
    """Split ``img`` into a smooth base and the signed residual detail.

    ``base + detail`` reproduces ``img`` bitwise. The base is the filter
    output passed through ``img - (img - q)``, which leaves it unchanged on
    8-bit and unit-grid images. A pixel whose value is too small relative
    to its base for any float64 split to be exact takes ``base = img``.
    """
    img = as_image(img)
    smooth = guided_filter_self(img, params)
    base = img - (img - smooth)
    detail = img - base
    inexact = base + detail != img
    base[inexact] = img[inexact]
    detail[inexact] = 0.0
    return Decomposition(base, detail)
