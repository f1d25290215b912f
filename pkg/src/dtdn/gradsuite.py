"""Finite-difference checks over every layer type and every training loss."""
from __future__ import annotations

import numpy as np

from .autograd import (
    ParamSet, Tensor, conv2d, finite_diff_check, leaky_relu, matmul, mean, relu, sigmoid,
    square, tanh,
)
from .autograd.gradcheck import GradCheckReport
from .model import (
    Discriminator, FeatureNet, Generator, adversarial_losses, content_loss, mse_loss,
    perceptual_loss,
)


def _input_param(rng, shape, scale=1.0, offset=0.0) -> ParamSet:
    return ParamSet({"x": Tensor(offset + scale * rng.normal(size=shape), requires_grad=True)})


def gradient_suite(tol: float = 1e-4, seed: int = 0) -> dict[str, GradCheckReport]:
    """Run each named check; every network stays under 5000 parameters."""
    rng = np.random.default_rng(seed)
    reports: dict[str, GradCheckReport] = {}

    def check(name, params, fn):
        reports[name] = finite_diff_check(params, fn, tol=tol)

    # layers: gradients w.r.t. inputs and weights
    x = Tensor(rng.normal(size=(2, 3, 7, 7)))
    for stride, pad in ((1, 1), (2, 1), (1, 0)):
        ps = ParamSet({"w": rng.normal(size=(4, 3, 3, 3)), "b": rng.normal(size=4)})
        xi = _input_param(rng, (2, 3, 7, 7))
        both = ParamSet({**dict(ps.items()), **dict(xi.items())})
        probe = rng.normal(size=(2, 4) + (((7 + 2 * pad - 3) // stride + 1),) * 2)
        check(f"conv2d[stride={stride},pad={pad}]", both,
              lambda ps=ps, xi=xi, s=stride, p=pad, probe=probe:
              (conv2d(xi["x"], ps["w"], ps["b"], stride=s, pad=p) * probe).sum())
    for name, fn in (("relu", relu), ("leaky_relu", leaky_relu), ("sigmoid", sigmoid), ("tanh", tanh)):
        xi = _input_param(rng, (3, 5))
        probe = rng.normal(size=(3, 5))
        check(name, xi, lambda xi=xi, fn=fn, probe=probe: (fn(xi["x"]) * probe).sum())
    ps = ParamSet({"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))})
    check("affine", ps, lambda: mean(square(matmul(ps["a"], ps["b"]) + 1.0)))
    del x

    # networks, narrow enough for exhaustive perturbation
    gen = Generator(seed, width=4, blocks=3)
    disc = Discriminator(seed, widths=(4, 4, 4))
    feats = FeatureNet(seed)
    detail = Tensor(0.1 * rng.normal(size=(1, 3, 8, 8)))
    base = Tensor(rng.uniform(0.2, 0.8, size=(1, 3, 8, 8)))
    truth = Tensor(rng.uniform(0, 1, size=(1, 3, 8, 8)))

    def clear():
        return base + gen(detail)

    check("generator", gen.params, lambda: mean(square(gen(detail))))
    check("discriminator", disc.params, lambda: disc(truth).sum())
    img = _input_param(rng, (1, 3, 8, 8), 0.3, 0.5)
    check("feature_net[input]", img, lambda: mean(square(feats(img["x"]))))

    # losses through the generator (and discriminator where it enters)
    check("content_loss", gen.params, lambda: content_loss(truth, clear(), feats))
    check("mse_loss", gen.params, lambda: mse_loss(truth, clear()))
    check("adversarial_d[discriminator]", disc.params,
          lambda: adversarial_losses(disc(truth), disc(clear().detach()))[0])
    check("adversarial_g[generator]", gen.params,
          lambda: adversarial_losses(disc(truth), disc(clear()))[1])
    check("perceptual_loss[generator]", gen.params,
          lambda: perceptual_loss(truth, clear(), disc(clear()), feats, lam=100.0))
    return reports
