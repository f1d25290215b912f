"""Named parameter collections, seeded initialisation and the Adam optimiser."""
from __future__ import annotations

import hashlib
from typing import Iterator, Mapping

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


class ParamSet:
    """Ordered mapping of parameter name to leaf ``Tensor``.

    Two ``ParamSet`` objects may hold the very same tensors; that is how
    weight sharing is expressed.
    """

    def __init__(self, tensors: Mapping[str, Tensor] | None = None):
        self._tensors: dict[str, Tensor] = {}
        for name, t in (tensors or {}).items():
            self.add(name, t)

    def add(self, name: str, value) -> Tensor:
        t = value if isinstance(value, Tensor) else Tensor(value, requires_grad=True, name=name)
        if not t.requires_grad or not t.is_leaf:
            raise ValueError(f"parameter {name!r} must be a leaf tensor requiring grad")
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def num_params(self) -> int:
        return int(sum(t.data.size for t in self._tensors.values()))

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._tensors.items()}

    def load(self, arrays: Mapping[str, np.ndarray]):
        """Overwrite parameter values in place (shared holders see the change)."""
        for k, t in self._tensors.items():
            src = np.asarray(arrays[k], dtype=np.float64)
            if src.shape != t.data.shape:
                raise ShapeError(f"{k}: expected shape {t.data.shape}, got {src.shape}")
            t.data[...] = src

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self._tensors.values()])

    def digest(self) -> str:
        h = hashlib.sha256()
        for k, t in self._tensors.items():
            h.update(k.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def conv_params(params: ParamSet, name: str, rng: np.random.Generator,
                c_in: int, c_out: int, k: int = 3, bias: bool = True):
    w = glorot_uniform(rng, (c_out, c_in, k, k), c_in * k * k, c_out * k * k)
    params.add(f"{name}.w", w)
    if bias:
        params.add(f"{name}.b", np.zeros(c_out))


def linear_params(params: ParamSet, name: str, rng: np.random.Generator, n_in: int, n_out: int):
    params.add(f"{name}.w", glorot_uniform(rng, (n_in, n_out), n_in, n_out))
    params.add(f"{name}.b", np.zeros(n_out))


class Adam:
    """Bias-corrected Adam over a ``ParamSet``.

    ``m``, ``v`` and ``t`` are plain attributes so checkpoints can store
    and restore them exactly.
    """

    def __init__(self, params: ParamSet, lr: float, betas=(0.9, 0.99), eps: float = 1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        self.params.zero_grad()

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else float(lr)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"m/{k}": a for k, a in self.m.items()}
        out.update({f"v/{k}": a for k, a in self.v.items()})
        return out

    def load_state(self, arrays: Mapping[str, np.ndarray], t: int):
        for k in self.m:
            self.m[k][...] = arrays[f"m/{k}"]
            self.v[k][...] = arrays[f"v/{k}"]
        self.t = int(t)
