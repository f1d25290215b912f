"""Central finite-difference validation of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ContractError
from .params import ParamSet
from .tensor import Tensor

MAX_EXHAUSTIVE = 5000


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    n_checked: int
    worst: tuple[str, int] | None

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= self.tol)


def finite_diff_check(params: ParamSet, loss_fn: Callable[[], Tensor], tol: float = 1e-4,
                      h: float = 1e-5, floor: float = 1e-6, sample: int | None = None,
                      seed: int = 0, analytic: dict[str, np.ndarray] | None = None) -> GradCheckReport:
    """Compare backprop gradients of ``loss_fn()`` with central differences.

    The relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    Every coordinate is perturbed unless ``sample`` asks for a random
    subset; exhaustive checks are limited to 5000 parameters. ``analytic``
    overrides the backprop gradients (used to test the checker itself).
    """
    total = params.num_params()
    if sample is None and total > MAX_EXHAUSTIVE:
        raise ContractError(f"{total} parameters exceed the exhaustive limit of {MAX_EXHAUSTIVE}; pass sample=")
    if analytic is None:
        params.zero_grad()
        loss = loss_fn()
        loss.backward()
        analytic = {k: p.grad.copy() for k, p in params.items()}

    coords = [(k, i) for k, p in params.items() for i in range(p.data.size)]
    if sample is not None and sample < len(coords):
        pick = np.random.default_rng(seed).choice(len(coords), size=sample, replace=False)
        coords = [coords[j] for j in sorted(pick)]

    worst, worst_err = None, 0.0
    for k, i in coords:
        flat = params[k].data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn().item()
        flat[i] = orig - h
        down = loss_fn().item()
        flat[i] = orig
        numeric = (up - down) / (2 * h)
        a = analytic[k].reshape(-1)[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if err > worst_err or worst is None:
            worst, worst_err = (k, i), err
    return GradCheckReport(float(worst_err), tol, len(coords), worst)
