import math

import numpy as np
import pytest

from dtdn.autograd import ParamSet, Tensor, finite_diff_check, mean, square
from dtdn.errors import ParameterError, ShapeError
from dtdn.model import (DEFAULT_LAMBDA, LOG_EPS, Discriminator, FeatureNet, Generator,
                        adversarial_losses, content_loss, mse_loss, perceptual_loss,
                        reconstruct, to_nchw, to_nhwc)


def test_layout_roundtrip(rng):
    imgs = rng.random((2, 5, 6, 3))
    assert to_nchw(imgs).shape == (2, 3, 5, 6)
    assert to_nchw(imgs[0]).shape == (1, 3, 5, 6)
    assert np.array_equal(to_nhwc(to_nchw(imgs)), imgs)


def test_generator_architecture():
    g = Generator(0)
    names = list(g.params)
    assert names[0] == "conv_in.w" and names[-1] == "conv_out.w"
    assert g.params["conv_in.w"].shape == (32, 3, 3, 3)
    assert g.params["block2.conv2.w"].shape == (32, 32, 3, 3)
    assert g.params["conv_out.w"].shape == (3, 32, 3, 3)
    assert len(names) == 2 + 2 * 3
    assert not any(n.endswith(".b") for n in names)


def test_generator_maps_zero_to_zero(rng):
    g = Generator(2)
    assert not np.any(g(np.zeros((1, 3, 8, 8))).data)
    x = rng.normal(size=(1, 3, 8, 8))
    assert np.allclose(g(3.0 * x).data, 3.0 * g(x).data, rtol=0, atol=1e-12)


def test_generator_shape_and_determinism(rng):
    x = rng.normal(scale=0.1, size=(2, 3, 12, 10))
    a, b = Generator(3)(x).data, Generator(3)(x).data
    assert a.shape == x.shape
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ShapeError):
        Generator(3)(np.zeros((1, 1, 8, 8)))


def test_generator_identity_configuration(rng):
    g = Generator(1)
    g.set_identity()
    x = rng.normal(size=(1, 3, 9, 9))
    assert np.max(np.abs(g(x).data - x)) <= 1e-12


def test_generator_batch_independent(rng):
    g = Generator(2, width=8)
    x = rng.normal(size=(3, 3, 8, 8))
    whole = g(x).data
    # BLAS blocking may differ with batch size, so compare to rounding level
    assert np.max(np.abs(whole[1:2] - g(x[1:2]).data)) <= 1e-12


def test_generator_gradients(rng):
    g = Generator(0, width=4)
    x = Tensor(0.1 * rng.normal(size=(1, 3, 8, 8)))
    assert finite_diff_check(g.params, lambda: mean(square(g(x)))).passed


def test_discriminator_range_and_zero_fc(rng):
    d = Discriminator(0)
    out = d(rng.random((3, 3, 16, 16))).data
    assert out.shape == (3,)
    assert np.all((out > 0) & (out < 1))
    d.params["fc.w"].data[...] = 0.0
    assert np.all(d(rng.random((2, 3, 8, 8))).data == 0.5)
    with pytest.raises(ShapeError):
        d(np.zeros((1, 3, 7, 8)))


def test_discriminator_gradients(rng):
    d = Discriminator(0, widths=(4, 4, 4))
    x = Tensor(rng.random((2, 3, 8, 8)))
    assert finite_diff_check(d.params, lambda: d(x).sum()).passed


def test_feature_net_is_fixed(rng):
    f = FeatureNet(0)
    digest = f.params.digest()
    x = Tensor(rng.random((1, 3, 6, 6)), requires_grad=True)
    mean(square(f(x))).backward()
    assert x.grad.any()
    assert all(not p.grad.any() for p in f.params.values())
    assert f.params.digest() == digest
    assert f(x).shape == (1, 16, 6, 6)


def test_content_loss_hand_computed():
    ps = ParamSet({"w": np.array([[[[0.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -1.0]]]]),
                   "b": np.array([0.5])})

    def phi(x):
        from dtdn.autograd import conv2d, relu
        return relu(conv2d(x, Tensor(ps["w"].data), Tensor(ps["b"].data), pad=1))

    truth = np.array([[1.0, 0.0], [0.0, 1.0]]).reshape(1, 1, 2, 2)
    clear = np.array([[0.5, 0.5], [0.0, 0.0]]).reshape(1, 1, 2, 2)
    # phi(truth): [[2*1-1*1+.5, .5], [.5, 2.5]]  phi(clear): [[1.5, 1.5], [.5, .5]]
    expected = math.sqrt((1.5 - 1.5) ** 2 + (0.5 - 1.5) ** 2 + 0.0 + (2.5 - 0.5) ** 2)
    assert abs(content_loss(truth, clear, phi, scale=1.0).item() - expected) <= 1e-12
    # at 0-255 scale: phi(truth): [[255.5, .5], [.5, 510.5]]  phi(clear): [[255.5, 255.5], [.5, .5]]
    expected = math.sqrt(255.0 ** 2 + 510.0 ** 2)
    assert abs(content_loss(truth, clear, phi).item() - expected) <= 1e-9


def test_content_loss_properties(rng):
    f = FeatureNet(0)
    a, b = rng.random((2, 3, 8, 8)), rng.random((2, 3, 8, 8))
    assert content_loss(a, a, f).item() == 0.0
    assert content_loss(a, b, f).item() > 0.0
    assert abs(content_loss(a, b, f).item() - content_loss(b, a, f).item()) <= 1e-9
    # zero-bias relu features are positively homogeneous
    assert content_loss(a, b, f).item() == pytest.approx(255.0 * content_loss(a, b, f, scale=1.0).item(),
                                                         rel=1e-12)
    with pytest.raises(ShapeError):
        content_loss(a, b[:1], f)


def test_adversarial_examples():
    d_loss, g_loss = adversarial_losses(np.array([1 - LOG_EPS]), np.array([LOG_EPS]))
    assert d_loss.item() == pytest.approx(0.0, abs=1e-6)
    d_loss, _ = adversarial_losses(np.array([0.5]), np.array([0.5]))
    assert d_loss.item() == pytest.approx(2 * math.log(2), abs=1e-15)
    g = [adversarial_losses([0.5], [p])[1].item() for p in (0.1, 0.5, 0.9)]
    assert g[0] > g[1] > g[2]


def test_adversarial_clamps_extremes():
    d_loss, g_loss = adversarial_losses(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    assert np.isfinite(d_loss.item()) and np.isfinite(g_loss.item())


def test_two_sided_loss_at_symmetric_point(rng):
    for p in rng.uniform(0.05, 0.95, 10):
        d = np.full(3, p)
        d_loss, _ = adversarial_losses(d, d)
        minimax_g = -np.sum(np.log(1 - d))
        assert d_loss.item() + minimax_g >= 2 * math.log(2) * 3 - 1e-12


def test_perceptual_loss(rng):
    f = FeatureNet(0)
    truth, clear = rng.random((2, 3, 8, 8)), rng.random((2, 3, 8, 8))
    d_clear = np.array([0.3, 0.6])
    assert DEFAULT_LAMBDA == 100.0
    assert perceptual_loss(truth, clear, d_clear, f, lam=0).item() == content_loss(truth, clear, f).item()
    parts = content_loss(truth, clear, f).item() + 100.0 * adversarial_losses(d_clear, d_clear)[1].item()
    assert abs(perceptual_loss(truth, clear, d_clear, f).item() - parts) <= 1e-12
    with pytest.raises(ParameterError):
        perceptual_loss(truth, clear, d_clear, f, lam=-1.0)


def test_mse_examples(rng):
    a = rng.random((2, 3, 4, 4))
    assert mse_loss(a, a).item() == 0.0
    assert mse_loss(a, a + 0.1).item() == pytest.approx(0.01, abs=1e-15)
    b = rng.random((2, 3, 4, 4))
    assert abs(mse_loss(a, b).item() - mse_loss(b, a).item()) <= 1e-15
    with pytest.raises(ShapeError):
        mse_loss(a, b[:, :2])


def test_reconstruct(rng):
    from dtdn.guided_filter import decompose
    img = rng.integers(0, 256, (8, 8, 3)) / 255.0
    base, detail = decompose(img)
    assert np.array_equal(reconstruct(base, detail), img)
    over = reconstruct(np.full((2, 2, 3), 0.8), np.full((2, 2, 3), 0.5))
    assert np.all(over == 1.0)
    out = reconstruct(rng.normal(size=(4, 4, 3)), rng.normal(size=(4, 4, 3)))
    assert out.min() >= 0 and out.max() <= 1
    with pytest.raises(ShapeError):
        reconstruct(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


def test_losses_differentiable_end_to_end(rng):
    g, d, f = Generator(0, width=4), Discriminator(0, widths=(4, 4, 4)), FeatureNet(0)
    base = Tensor(rng.uniform(0.2, 0.8, (1, 3, 8, 8)))
    detail = Tensor(0.1 * rng.normal(size=(1, 3, 8, 8)))
    truth = Tensor(rng.random((1, 3, 8, 8)))

    def loss():
        clear = base + g(detail)
        return perceptual_loss(truth, clear, d(clear), f) + mse_loss(truth, clear)

    assert finite_diff_check(g.params, loss).passed
