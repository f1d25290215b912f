"""PSNR, SSIM and UQI with per-window reference implementations, plus
dataset-level evaluation reports."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, ShapeError
from .image import as_image, read_ppm
from .rain import DatasetManifest

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
UQI_BLOCK = 8


def _pair(a, b):
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    g /= g.sum()
    return g


def _weighted_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable weighted sums over every valid window, per channel."""
    k = len(g)
    rows = sliding_window_view(x, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim_map(a, b, data_range: float = 1.0) -> np.ndarray:
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ShapeError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _weighted_valid(a, g), _weighted_valid(b, g)
    var_a = _weighted_valid(a * a, g) - mu_a * mu_a
    var_b = _weighted_valid(b * b, g) - mu_b * mu_b
    cov = _weighted_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows, averaged over channels."""
    return float(np.clip(ssim_map(a, b, data_range).mean(axis=(0, 1)).mean(), -1.0, 1.0))


def ssim_naive(a, b, data_range: float = 1.0) -> float:
    a, b = _pair(a, b)
    h, w, ch = a.shape
    if min(h, w) < SSIM_WINDOW:
        raise ShapeError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    g = gaussian_window()
    win = np.outer(g, g)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    per_channel = []
    for c in range(ch):
        vals = []
        for i in range(h - SSIM_WINDOW + 1):
            for j in range(w - SSIM_WINDOW + 1):
                pa = a[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW, c]
                pb = b[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW, c]
                ma, mb = (win * pa).sum(), (win * pb).sum()
                va = (win * (pa - ma) ** 2).sum()
                vb = (win * (pb - mb) ** 2).sum()
                cab = (win * (pa - ma) * (pb - mb)).sum()
                vals.append((2 * ma * mb + c1) * (2 * cab + c2)
                            / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
        per_channel.append(np.mean(vals))
    return float(np.mean(per_channel))


def _uqi_from_moments(ma, mb, va, vb, cab):
    """Quality index with the reference handling of zero denominators:
    flat windows with equal-or-zero means score 1, flat windows with
    different means score 2ab/(a^2+b^2)."""
    var_sum = va + vb
    mean_sq = ma * ma + mb * mb
    den = var_sum * mean_sq
    q = np.ones_like(den)
    flat = (var_sum == 0) & (mean_sq != 0)
    q = np.where(flat, 2 * ma * mb / np.where(flat, mean_sq, 1.0), q)
    ok = den != 0
    q = np.where(ok, 4 * cab * ma * mb / np.where(ok, den, 1.0), q)
    return q


def uqi_map(a, b, block: int = UQI_BLOCK) -> np.ndarray:
    a, b = _pair(a, b)
    if min(a.shape[:2]) < block:
        raise ShapeError(f"UQI needs images of at least {block}x{block}")
    wa = sliding_window_view(a, (block, block), axis=(0, 1))
    wb = sliding_window_view(b, (block, block), axis=(0, 1))
    # shift each window by its first pixel so flat windows give exact zeros
    da = wa - wa[..., :1, :1]
    db = wb - wb[..., :1, :1]
    sa, sb = da.mean(axis=(-2, -1)), db.mean(axis=(-2, -1))
    ca = da - sa[..., None, None]
    cb = db - sb[..., None, None]
    va = (ca * ca).mean(axis=(-2, -1))
    vb = (cb * cb).mean(axis=(-2, -1))
    cab = (ca * cb).mean(axis=(-2, -1))
    return _uqi_from_moments(wa[..., 0, 0] + sa, wb[..., 0, 0] + sb, va, vb, cab)


def uqi(a, b, block: int = UQI_BLOCK) -> float:
    """Universal quality index averaged over sliding 8x8 windows and channels."""
    return float(np.clip(uqi_map(a, b, block).mean(axis=(0, 1)).mean(), -1.0, 1.0))


def uqi_naive(a, b, block: int = UQI_BLOCK) -> float:
    a, b = _pair(a, b)
    h, w, ch = a.shape
    if min(h, w) < block:
        raise ShapeError(f"UQI needs images of at least {block}x{block}")
    per_channel = []
    for c in range(ch):
        vals = []
        for i in range(h - block + 1):
            for j in range(w - block + 1):
                pa = a[i:i + block, j:j + block, c]
                pb = b[i:i + block, j:j + block, c]
                da, db = pa - pa[0, 0], pb - pb[0, 0]
                sa, sb = da.sum() / da.size, db.sum() / db.size
                va = ((da - sa) ** 2).sum() / da.size
                vb = ((db - sb) ** 2).sum() / db.size
                cab = ((da - sa) * (db - sb)).sum() / da.size
                ma, mb = pa[0, 0] + sa, pb[0, 0] + sb
                vals.append(float(_uqi_from_moments(np.float64(ma), np.float64(mb),
                                                    np.float64(va), np.float64(vb),
                                                    np.float64(cab))))
        per_channel.append(np.mean(vals))
    return float(np.mean(per_channel))


# --- dataset reports ----------------------------------------------------------------

def _mean(values) -> float:
    values = list(values)
    if any(math.isinf(v) for v in values):
        return math.inf
    # fsum is exactly rounded, so the mean does not depend on summation order
    return math.fsum(values) / len(values)


def _json_float(x: float):
    return "inf" if math.isinf(x) else x


@dataclass
class MetricsReport:
    images: list[dict] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.images)

    @property
    def mean_psnr(self) -> float:
        return _mean(r["psnr"] for r in self.images)

    @property
    def mean_ssim(self) -> float:
        return _mean(r["ssim"] for r in self.images)

    @property
    def mean_uqi(self) -> float:
        return _mean(r["uqi"] for r in self.images)

    def to_dict(self) -> dict:
        return {
            "images": [{k: _json_float(v) if isinstance(v, float) else v for k, v in r.items()}
                       for r in self.images],
            "mean_psnr": _json_float(self.mean_psnr),
            "mean_ssim": self.mean_ssim,
            "mean_uqi": self.mean_uqi,
            "count": self.count,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def score(image_id: str, restored, truth) -> dict:
    return {"id": image_id, "psnr": psnr(restored, truth),
            "ssim": ssim(restored, truth), "uqi": uqi(restored, truth)}


def evaluate_dataset(manifest: DatasetManifest, derained_dir: str | os.PathLike) -> MetricsReport:
    """Score each ``<derained_dir>/<id>.ppm`` against its clean image."""
    if len(manifest) == 0:
        raise DataError("cannot evaluate an empty manifest")
    derained_dir = Path(derained_dir)
    missing = [e.id for e in manifest.entries if not (derained_dir / f"{e.id}.ppm").is_file()]
    if missing:
        raise FileNotFoundError(f"derained images missing for ids: {', '.join(missing)}")
    report = MetricsReport()
    for e in manifest.entries:
        restored = read_ppm(derained_dir / f"{e.id}.ppm")
        truth = read_ppm(manifest.resolve(e.clean))
        report.images.append(score(e.id, restored, truth))
    return report
