"""Procedural rain streaks, the 0-3 streak-type enrichment scheme and
paired (rainy, clean) dataset construction with a heavy-rain partition."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DataError, ParameterError
from .image import as_image, clip_unit, decode_p6, encode_p6, read_ppm, resize_bilinear
from .seeding import derive_seed, rng_for

CATEGORIES = ("left", "vertical", "right")
ANGLE_RANGES = {"left": (-45.0, -10.0), "vertical": (-10.0, 10.0), "right": (10.0, 45.0)}
K_MAX = 3
DEFAULT_HEAVY_THRESHOLD = 8.0

ANGLE_JITTER = 3.0
LENGTH_JITTER = 0.2


@dataclass(frozen=True)
class StreakSpec:
    """One streak type. ``angle`` is in degrees from vertical, positive
    values lean the streak's lower end to the right."""
    direction_category: str
    angle: float
    length: float
    width: float
    density: float
    intensity: float

    def __post_init__(self):
        if self.direction_category not in ANGLE_RANGES:
            raise ParameterError(f"unknown direction category {self.direction_category!r}")
        if not angle_in_category(self.angle, self.direction_category):
            raise ParameterError(
                f"angle {self.angle} outside the {self.direction_category} range")
        if self.density < 0:
            raise ParameterError("density must be non-negative")
        if not 0 < self.intensity <= 1:
            raise ParameterError("intensity must lie in (0, 1]")
        if self.length <= 0 or self.width <= 0:
            raise ParameterError("length and width must be positive")


def angle_in_category(angle: float, category: str) -> bool:
    lo, hi = ANGLE_RANGES[category]
    if category == "vertical":
        return lo < angle < hi
    return lo <= angle <= hi


@dataclass(frozen=True)
class EnrichmentRecord:
    k: int
    specs: tuple[StreakSpec, ...]
    seed: int
    source_id: str = ""

    def __post_init__(self):
        if not 0 <= self.k <= K_MAX or len(self.specs) != self.k:
            raise ParameterError(f"record needs 0 <= k <= {K_MAX} and k specs")

    @property
    def total_density(self) -> float:
        return float(sum(s.density for s in self.specs))


@dataclass
class ManifestEntry:
    clean: str
    rainy: str
    record: EnrichmentRecord
    heavy: bool = False

    @property
    def id(self) -> str:
        return Path(self.rainy).stem

    def to_json(self) -> dict:
        return {
            "clean": self.clean,
            "rainy": self.rainy,
            "k": self.record.k,
            "specs": [asdict(s) for s in self.record.specs],
            "seed": self.record.seed,
            "heavy": self.heavy,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestEntry":
        specs = tuple(StreakSpec(**s) for s in obj["specs"])
        record = EnrichmentRecord(int(obj["k"]), specs, int(obj["seed"]), Path(obj["clean"]).stem)
        return cls(obj["clean"], obj["rainy"], record, bool(obj["heavy"]))


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path | None = None

    def __len__(self):
        return len(self.entries)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if self.root is not None and not p.is_absolute():
            return self.root / p
        return p

    def heavy(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.heavy]

    def all(self) -> list[ManifestEntry]:
        return list(self.entries)

    def dumps(self) -> str:
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self.entries)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        entries = []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                entries.append(ManifestEntry.from_json(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad manifest line ({exc})") from exc
        return cls(entries, root=path.parent)


# --- rendering ---------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def render_streak_layer(spec: StreakSpec, h: int, w: int, seed: int) -> np.ndarray:
    """Additive (h, w, 3) streak layer with values in [0, 1].

    Draws ``round(density * h * w / 1000)`` anti-aliased segments. Each
    segment jitters the angle by up to 3 degrees and the length by up to
    20%, and scales its brightness by a uniform factor in [0.5, 1].
    """
    if h < 8 or w < 8:
        raise ParameterError(f"streak layers need at least 8x8 pixels, got {h}x{w}")
    rng = np.random.default_rng(seed)
    count = _round_half_up(spec.density * h * w / 1000.0)
    layer = np.zeros((h, w))
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    half_w = spec.width / 2.0
    for _ in range(count):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        theta = math.radians(spec.angle + rng.uniform(-ANGLE_JITTER, ANGLE_JITTER))
        length = spec.length * rng.uniform(1 - LENGTH_JITTER, 1 + LENGTH_JITTER)
        bright = spec.intensity * rng.uniform(0.5, 1.0)
        dy, dx = math.cos(theta), math.sin(theta)
        # signed position along the streak and distance from its axis
        t = (yy - cy) * dy + (xx - cx) * dx
        t = np.clip(t, -length / 2, length / 2)
        dist = np.hypot(yy - (cy + t * dy), xx - (cx + t * dx))
        coverage = np.clip(half_w + 0.5 - dist, 0.0, 1.0)
        layer += bright * coverage
    layer = np.clip(layer, 0.0, 1.0)
    return np.repeat(layer[:, :, None], 3, axis=2)


def default_spec_sampler(rng: np.random.Generator, category: str, h: int, w: int) -> StreakSpec:
    lo, hi = ANGLE_RANGES[category]
    angle = rng.uniform(lo, hi)
    while not angle_in_category(angle, category):
        angle = rng.uniform(lo, hi)
    side = min(h, w)
    return StreakSpec(
        direction_category=category,
        angle=float(angle),
        length=float(rng.uniform(0.25, 0.6) * side),
        width=float(rng.uniform(1.0, 2.0)),
        density=float(rng.uniform(2.0, 10.0)),
        intensity=float(rng.uniform(0.25, 0.6)),
    )


@dataclass(frozen=True)
class EnrichmentPolicy:
    k_max: int = K_MAX
    spec_sampler: Callable[[np.random.Generator, str, int, int], StreakSpec] = default_spec_sampler


def composite(clean: np.ndarray, record: EnrichmentRecord) -> np.ndarray:
    """Re-render every layer named in ``record`` and add it onto ``clean``."""
    clean = as_image(clean)
    h, w, _ = clean.shape
    total = np.zeros_like(clean)
    for j, spec in enumerate(record.specs):
        total = total + render_streak_layer(spec, h, w, derive_seed(record.seed, "layer", j))
    return clip_unit(clean + total)


def enrich(clean: np.ndarray, seed: int, policy: EnrichmentPolicy = EnrichmentPolicy(),
           source_id: str = "") -> tuple[np.ndarray, EnrichmentRecord]:
    """Composite 0..k_max streak types with pairwise distinct directions."""
    clean = as_image(clean)
    if clean.min() < 0 or clean.max() > 1:
        raise ContractError("clean image must lie in the unit interval")
    if not 0 <= policy.k_max <= K_MAX:
        raise ParameterError(f"k_max must be within 0..{K_MAX}")
    h, w, _ = clean.shape
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, policy.k_max + 1))
    cats = rng.choice(len(CATEGORIES), size=k, replace=False)
    specs = tuple(policy.spec_sampler(rng, CATEGORIES[c], h, w) for c in cats)
    record = EnrichmentRecord(k, specs, int(seed), source_id)
    if k == 0:
        return clean.copy(), record
    return composite(clean, record), record


# --- partitioning and datasets -----------------------------------------------

def is_heavy(record: EnrichmentRecord, density_threshold: float = DEFAULT_HEAVY_THRESHOLD) -> bool:
    return record.k >= 2 or (record.k >= 1 and record.total_density >= density_threshold)


def partition_heavy(manifest: DatasetManifest,
                    density_threshold: float = DEFAULT_HEAVY_THRESHOLD) -> DatasetManifest:
    entries = [replace(e, heavy=is_heavy(e.record, density_threshold)) for e in manifest.entries]
    return DatasetManifest(entries, manifest.root)


def procedural_texture(size: int, seed: int) -> np.ndarray:
    """Seeded clean background: a two-colour gradient plus random shapes."""
    rng = np.random.default_rng(seed)
    yy, xx = (np.mgrid[0:size, 0:size] + 0.5) / size
    phi = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(phi) * (xx - 0.5) + np.sin(phi) * (yy - 0.5)) + 0.5
    c0, c1 = rng.uniform(0.05, 0.7, 3), rng.uniform(0.05, 0.7, 3)
    img = c0 + np.clip(ramp, 0, 1)[:, :, None] * (c1 - c0)
    for _ in range(int(rng.integers(2, 6))):
        colour = rng.uniform(0.05, 0.75, 3)
        cy, cx = rng.uniform(0, 1, 2)
        ry, rx = rng.uniform(0.08, 0.3, 2)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1
        img[mask] = colour
    # faint texture so the detail layer is not empty on clean images
    freq = rng.uniform(2, 6, 2)
    img = img + 0.03 * np.sin(2 * np.pi * (freq[0] * xx + freq[1] * yy))[:, :, None]
    return clip_unit(img)


def _list_images(clean_dir: Path) -> list[Path]:
    if not clean_dir.is_dir():
        raise FileNotFoundError(f"clean image directory not found: {clean_dir}")
    return sorted(p for p in clean_dir.iterdir() if p.suffix.lower() in (".ppm", ".pnm"))


def build_dataset(out_dir: str | os.PathLike, n: int, size: int, seed: int,
                  clean_dir: str | os.PathLike | None = None,
                  policy: EnrichmentPolicy = EnrichmentPolicy(),
                  heavy_threshold: float = DEFAULT_HEAVY_THRESHOLD) -> DatasetManifest:
    """Write ``n`` (clean, rainy) PPM pairs plus ``manifest.jsonl``.

    Clean images come from ``clean_dir`` (cycled, resized to ``size``) or,
    when it is absent or empty, from ``procedural_texture``.
    """
    if n < 0 or size < 8:
        raise ParameterError("need n >= 0 and size >= 8")
    out = Path(out_dir)
    sources = _list_images(Path(clean_dir)) if clean_dir is not None else []
    if n == 0:
        return DatasetManifest([], out)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "rainy").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        if sources:
            src = read_ppm(sources[i % len(sources)])
            clean = resize_bilinear(src, size, size)
            source_id = sources[i % len(sources)].stem
        else:
            clean = procedural_texture(size, derive_seed(seed, "texture", i))
            source_id = f"texture{i:05d}"
        clean_bytes = encode_p6(clean)
        clean = decode_p6(clean_bytes)
        rainy, record = enrich(clean, derive_seed(seed, "enrich", i), policy, source_id)
        name = f"{i:05d}.ppm"
        (out / "clean" / name).write_bytes(clean_bytes)
        (out / "rainy" / name).write_bytes(encode_p6(rainy))
        entries.append(ManifestEntry(f"clean/{name}", f"rainy/{name}", record,
                                     is_heavy(record, heavy_threshold)))
    manifest = DatasetManifest(entries, out)
    manifest.save(out / "manifest.jsonl")
    return manifest


def load_pairs(manifest: DatasetManifest, entries: Sequence[ManifestEntry] | None = None):
    """Read (rainy, clean) arrays for ``entries`` (default: all)."""
    entries = manifest.entries if entries is None else entries
    rainy = np.stack([read_ppm(manifest.resolve(e.rainy)) for e in entries])
    clean = np.stack([read_ppm(manifest.resolve(e.clean)) for e in entries])
    return rainy, clean
