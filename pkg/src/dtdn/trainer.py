"""Alternating GAN / MSE training with a shared generator, checkpoints and
the three-step deraining pipeline."""
from __future__ import annotations

import contextlib
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterator, Sequence

import numpy as np

from .autograd import Adam, ParamSet, Tensor, no_grad
from .errors import ContractError, DataError, FormatError, ParameterError
from .guided_filter import DEFAULT_EPS, DEFAULT_RADIUS, FilterParams, decompose
from .image import as_image
from .model import (
    DEFAULT_LAMBDA, Discriminator, FeatureNet, Generator, adversarial_losses, content_loss,
    mse_loss, reconstruct, to_nchw, to_nhwc,
)
from .rain import DEFAULT_HEAVY_THRESHOLD, DatasetManifest, load_pairs
from .seeding import derive_seed

BETAS = (0.9, 0.99)
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr_gan: float = 1e-3
    lr_cnn: float = 1e-4
    batch: int = 4
    cycles: int = 5
    rounds: int = 400
    lam: float = DEFAULT_LAMBDA
    radius: int = DEFAULT_RADIUS
    eps: float = DEFAULT_EPS
    seed: int = 0
    heavy_threshold: float = DEFAULT_HEAVY_THRESHOLD
    gen_width: int = 32
    gen_blocks: int = 3
    disc_widths: tuple[int, ...] = (16, 32, 64)

    def __post_init__(self):
        self.disc_widths = tuple(int(w) for w in self.disc_widths)
        if not self.lr_gan > self.lr_cnn:
            raise ParameterError(
                f"lr_gan ({self.lr_gan}) must exceed lr_cnn ({self.lr_cnn})")
        if self.lr_cnn < 0:
            raise ParameterError("learning rates must be non-negative")
        if self.batch < 1 or self.cycles < 1 or self.rounds < 0:
            raise ParameterError("need batch >= 1, cycles >= 1, rounds >= 0")
        if self.lam < 0:
            raise ParameterError("lambda must be non-negative")
        self.filter  # validates radius and eps

    @property
    def filter(self) -> FilterParams:
        return FilterParams(self.radius, self.eps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["disc_widths"] = list(self.disc_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


class DTDN:
    """Model plus optimiser state: everything a checkpoint holds.

    ``cnn_params`` and ``generator.params`` are one object; the GAN and
    CNN optimisers each keep their own moments over those tensors.
    """

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.generator = Generator(derive_seed(cfg.seed, "init"), cfg.gen_width, cfg.gen_blocks)
        self.discriminator = Discriminator(derive_seed(cfg.seed, "init"), cfg.disc_widths)
        self.features = FeatureNet(derive_seed(cfg.seed, "init"))
        self.opt_gan = Adam(self.generator.params, cfg.lr_gan, BETAS, ADAM_EPS)
        self.opt_cnn = Adam(self.cnn_params, cfg.lr_cnn, BETAS, ADAM_EPS)
        self.opt_disc = Adam(self.discriminator.params, cfg.lr_gan, BETAS, ADAM_EPS)
        self.rng = np.random.default_rng(derive_seed(cfg.seed, "batches"))
        self.round = 0

    @property
    def cnn_params(self) -> ParamSet:
        return self.generator.params

    def param_sets(self) -> dict[str, ParamSet]:
        return {"generator": self.generator.params,
                "discriminator": self.discriminator.params,
                "features": self.features.params}

    def optimizers(self) -> dict[str, Adam]:
        return {"adam_gan": self.opt_gan, "adam_cnn": self.opt_cnn, "adam_disc": self.opt_disc}


@contextlib.contextmanager
def frozen(params: ParamSet) -> Iterator[None]:
    """Temporarily stop gradient accumulation into ``params``."""
    tensors = list(params.values())
    for t in tensors:
        t.requires_grad = False
    try:
        yield
    finally:
        for t in tensors:
            t.requires_grad = True


# --- data -------------------------------------------------------------------------

@dataclass
class TrainingData:
    """NCHW arrays of a decomposed dataset plus its heavy mask."""
    truth: np.ndarray
    base: np.ndarray
    detail: np.ndarray
    heavy: np.ndarray
    ids: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.truth)

    @classmethod
    def from_arrays(cls, rainy: np.ndarray, clean: np.ndarray, heavy, params: FilterParams,
                    ids: Sequence[str] | None = None) -> "TrainingData":
        parts = [decompose(img, params) for img in rainy]
        base = np.stack([p.base for p in parts])
        detail = np.stack([p.detail for p in parts])
        return cls(to_nchw(clean), to_nchw(base), to_nchw(detail),
                   np.asarray(heavy, dtype=bool), list(ids or []))

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, params: FilterParams) -> "TrainingData":
        if len(manifest) == 0:
            raise DataError("manifest is empty")
        rainy, clean = load_pairs(manifest)
        return cls.from_arrays(rainy, clean, [e.heavy for e in manifest.entries], params,
                               [e.id for e in manifest.entries])


def _batch(data: TrainingData, idx):
    idx = np.asarray(idx)
    return Tensor(data.truth[idx]), Tensor(data.base[idx]), Tensor(data.detail[idx])


def _clear(base: Tensor, detail_prime: Tensor) -> Tensor:
    return base + detail_prime


# --- steps ------------------------------------------------------------------------

def train_gan_cycle(model: DTDN, data: TrainingData, idx) -> dict:
    """One inner cycle: discriminator update, then generator update with
    the perceptual loss, both at ``lr_gan``. ``idx`` must be heavy."""
    if not np.all(data.heavy[np.asarray(idx)]):
        raise ContractError("GAN cycles only accept heavy-partition images")
    cfg = model.cfg
    G, D, F = model.generator, model.discriminator, model.features
    truth, base, detail = _batch(data, idx)

    with frozen(D.params):
        clear = _clear(base, G(detail))

    model.opt_disc.zero_grad()
    d_loss, _ = adversarial_losses(D(truth), D(clear.detach()))
    d_loss.backward()
    model.opt_disc.step(cfg.lr_gan)

    model.opt_gan.zero_grad()
    with frozen(D.params):
        _, g_adv = adversarial_losses(np.full(len(idx), 0.5), D(clear))
        g_content = content_loss(truth, clear, F)
        (g_content + cfg.lam * g_adv).backward()
    model.opt_gan.step(cfg.lr_gan)
    return {"d_loss": d_loss.item(), "g_content": g_content.item(), "g_adv": g_adv.item()}


def train_cnn_step(model: DTDN, data: TrainingData, idx) -> dict:
    """Generator-only MSE update at ``lr_cnn`` on the shared parameters."""
    truth, base, detail = _batch(data, idx)
    model.opt_cnn.zero_grad()
    loss = mse_loss(truth, _clear(base, model.generator(detail)))
    loss.backward()
    model.opt_cnn.step(model.cfg.lr_cnn)
    return {"mse": loss.item()}


def _draw(rng: np.random.Generator, pool: np.ndarray, batch: int) -> np.ndarray:
    return np.sort(rng.choice(pool, size=batch, replace=len(pool) < batch))


def _row(r: int, step: str, rec: dict) -> dict:
    row = {"round": r, "step": step, "d_loss": None, "g_content": None, "g_adv": None, "mse": None}
    row.update(rec)
    return row


def train(data: TrainingData | DatasetManifest, cfg: TrainConfig, model: DTDN | None = None,
          stop_after: int | None = None,
          on_row: Callable[[dict], None] | None = None) -> tuple[DTDN, list[dict]]:
    """Run rounds of ``cycles`` GAN cycles on heavy batches followed by one
    CNN step on a batch from the whole set.

    ``model`` resumes a checkpointed run; ``stop_after`` ends the call once
    that many rounds are complete. Every update yields one log row.
    """
    if isinstance(data, DatasetManifest):
        data = TrainingData.from_manifest(data, cfg.filter)
    heavy_pool = np.flatnonzero(data.heavy)
    if len(heavy_pool) == 0:
        raise DataError("the heavy subset is empty; GAN cycles have no data")
    all_pool = np.arange(len(data))
    model = DTDN(cfg) if model is None else model
    end = cfg.rounds if stop_after is None else min(cfg.rounds, stop_after)
    log: list[dict] = []

    def emit(row):
        log.append(row)
        if on_row is not None:
            on_row(row)

    while model.round < end:
        r = model.round
        for _ in range(cfg.cycles):
            rec = train_gan_cycle(model, data, _draw(model.rng, heavy_pool, cfg.batch))
            emit(_row(r, "discriminator", {"d_loss": rec["d_loss"]}))
            emit(_row(r, "generator", {"g_content": rec["g_content"], "g_adv": rec["g_adv"]}))
        rec = train_cnn_step(model, data, _draw(model.rng, all_pool, cfg.batch))
        emit(_row(r, "cnn", rec))
        model.round += 1
    return model, log


# --- inference --------------------------------------------------------------------

def derain(img: np.ndarray, model: DTDN) -> np.ndarray:
    """Decompose, regenerate the detail layer, add back the base and clip."""
    img = as_image(img)
    base, detail = decompose(img, model.cfg.filter)
    with no_grad():
        detail_prime = model.generator(to_nchw(detail)).data
    return reconstruct(base, to_nhwc(detail_prime)[0])


def derain_batch(images, model: DTDN) -> np.ndarray:
    return np.stack([derain(img, model) for img in images])


# --- checkpoints ------------------------------------------------------------------

MAGIC = b"DTDN"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<u8"), 2: np.dtype("u1")}
_CODES = {v: k for k, v in _DTYPES.items()}


def _pack_arrays(named: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(named))]
    for name, arr in named.items():
        key = name.encode()
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<") if arr.dtype.itemsize > 1 else arr.dtype
        code = _CODES[np.dtype(dtype)]
        out.append(struct.pack("<H", len(key)) + key)
        out.append(struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload = arr.astype(_DTYPES[code], copy=False).tobytes()
        out.append(struct.pack("<Q", len(payload)) + payload)
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


def _unpack_arrays(blob: bytes) -> dict[str, np.ndarray]:
    blob = bytes(blob)
    if len(blob) < 14 or blob[:4] != MAGIC:
        raise FormatError("not a DTDN checkpoint (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checkpoint CRC mismatch (truncated or corrupt)")
    version, count = struct.unpack_from("<HI", body, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    pos, out = 10, {}
    try:
        for _ in range(count):
            (klen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos:pos + klen].decode()
            pos += klen
            code, ndim = struct.unpack_from("<BB", body, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            (nbytes,) = struct.unpack_from("<Q", body, pos)
            pos += 8
            dtype = _DTYPES[code]
            out[name] = np.frombuffer(body[pos:pos + nbytes], dtype=dtype).reshape(shape).copy()
            pos += nbytes
    except (struct.error, KeyError, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed checkpoint body: {exc}") from exc
    if pos != len(body):
        raise FormatError("trailing bytes in checkpoint body")
    return out


def save_checkpoint(model: DTDN) -> bytes:
    meta = {
        "config": model.cfg.to_dict(),
        "round": model.round,
        "rng": model.rng.bit_generator.state,
        "adam_t": {k: opt.t for k, opt in model.optimizers().items()},
    }
    named = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for prefix, ps in model.param_sets().items():
        for k, t in ps.items():
            named[f"{prefix}/{k}"] = t.data
    for prefix, opt in model.optimizers().items():
        for k, arr in opt.state_arrays().items():
            named[f"{prefix}/{k}"] = arr
    return _pack_arrays(named)


def load_checkpoint(blob: bytes) -> DTDN:
    arrays = _unpack_arrays(blob)
    try:
        meta = json.loads(arrays.pop("meta").tobytes().decode())
        model = DTDN(TrainConfig.from_dict(meta["config"]))
        for prefix, ps in model.param_sets().items():
            ps.load({k: arrays[f"{prefix}/{k}"] for k in ps})
        for prefix, opt in model.optimizers().items():
            keys = opt.state_arrays()
            opt.load_state({k: arrays[f"{prefix}/{k}"] for k in keys}, meta["adam_t"][prefix])
        model.rng.bit_generator.state = meta["rng"]
        model.round = int(meta["round"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"checkpoint is missing or has invalid entries: {exc}") from exc
    return model
