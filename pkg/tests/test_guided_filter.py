import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dtdn.errors import ParameterError
from dtdn.guided_filter import (DEFAULT_EPS, DEFAULT_RADIUS, FilterParams, box_filter,
                                box_filter_naive, decompose, guided_filter_naive,
                                guided_filter_self)
from dtdn.rain import StreakSpec, procedural_texture, render_streak_layer

images = arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9), st.sampled_from([1, 3])),
                elements=st.floats(0, 1))


def test_defaults():
    assert DEFAULT_RADIUS == 10
    assert DEFAULT_EPS == pytest.approx(1.5379e-4, rel=1e-4)
    p = FilterParams()
    assert (p.radius, p.eps) == (10, DEFAULT_EPS)


@pytest.mark.parametrize("radius,eps", [(0, 0.1), (-1, 0.1), (1.5, 0.1), (1, 0.0), (1, -1e-3)])
def test_filter_params_validation(radius, eps):
    with pytest.raises(ParameterError):
        FilterParams(radius, eps)


@pytest.mark.parametrize("radius", [1, 2, 5, 30])
def test_box_constant(radius):
    img = np.full((7, 9, 3), 0.37)
    assert np.all(box_filter(img, radius) == 0.37)


def test_box_two_by_two_example():
    img = np.array([[0.0, 1.0], [0.0, 1.0]])[:, :, None]
    assert np.all(box_filter(img, 1) == 0.5)


def test_box_matches_naive(rng):
    for _ in range(20):
        img = rng.random((8, 8, 3))
        r = int(rng.integers(1, 5))
        assert np.max(np.abs(box_filter(img, r) - box_filter_naive(img, r))) <= 1e-12


def test_box_rejects_bad_radius():
    with pytest.raises(ParameterError):
        box_filter(np.zeros((3, 3, 1)), 0)


@settings(max_examples=40)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**32 - 1))
def test_box_linear(alpha, beta, seed):
    r = np.random.default_rng(seed)
    p, q = r.random((6, 7, 3)), r.random((6, 7, 3))
    lhs = box_filter(alpha * p + beta * q, 2)
    rhs = alpha * box_filter(p, 2) + beta * box_filter(q, 2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@settings(max_examples=40)
@given(st.floats(0, 1), st.integers(1, 12), st.integers(1, 12), st.integers(1, 4))
def test_guided_constant_exact(c, h, w, r):
    img = np.full((h, w, 3), c)
    assert np.all(guided_filter_self(img, FilterParams(r, 1e-4)) == c)


def test_guided_matches_naive(rng):
    for _ in range(10):
        img = rng.random((8, 8, 3))
        fast = guided_filter_self(img, FilterParams(2, 0.01))
        assert np.max(np.abs(fast - guided_filter_naive(img, 2, 0.01))) <= 1e-10


def test_guided_large_eps_tends_to_double_box(rng):
    img = rng.random((8, 8, 3))
    out = guided_filter_self(img, FilterParams(2, 1e9))
    assert np.max(np.abs(out - box_filter(box_filter(img, 2), 2))) <= 1e-6


def test_guided_rejects_nonpositive_eps():
    class Loose:
        radius, eps = 2, 0.0
    with pytest.raises(ParameterError):
        guided_filter_self(np.zeros((3, 3, 3)), Loose())


def test_residual_variance_monotone_in_eps():
    img = procedural_texture(24, 5)
    variances = [np.var(img - guided_filter_self(img, FilterParams(3, e))) for e in (1e-4, 1e-2, 1.0)]
    assert variances[0] <= variances[1] <= variances[2]


def test_decompose_constant_has_zero_detail():
    base, detail = decompose(np.full((9, 9, 3), 0.6))
    assert not detail.any()
    assert np.all(base == 0.6)


def test_decompose_exact_on_random(rng):
    for _ in range(30):
        img = rng.random((int(rng.integers(4, 20)), int(rng.integers(4, 20)), 3))
        base, detail = decompose(img, FilterParams(3, 0.01))
        assert np.array_equal(base + detail, img)


def test_decompose_exact_on_8bit_images(rng):
    for _ in range(30):
        img = rng.integers(0, 256, (16, 16, 3)) / 255.0
        base, detail = decompose(img)
        assert np.array_equal(base + detail, img)


@settings(max_examples=60)
@given(images)
def test_decompose_exact_property(img):
    base, detail = decompose(img, FilterParams(2, 0.01))
    assert np.array_equal(base + detail, img)


def test_decompose_base_is_filter_output_on_8bit(rng):
    img = rng.integers(0, 256, (16, 16, 3)) / 255.0
    assert np.array_equal(decompose(img).base, guided_filter_self(img))


def test_decompose_exact_with_extreme_dynamic_range(rng):
    img = rng.random((12, 12, 3)) ** 30
    img[::3, ::2] = 1e-300
    base, detail = decompose(img, FilterParams(2, 0.01))
    assert np.array_equal(base + detail, img)


def test_detail_carries_the_streaks():
    clean = procedural_texture(32, 3)
    spec = StreakSpec("vertical", 4.0, 12.0, 1.0, 8.0, 0.5)
    streaks = render_streak_layer(spec, 32, 32, 9)
    rainy = np.clip(clean + streaks, 0, 1)
    base, detail = decompose(rainy)
    s = (rainy - clean).ravel()
    assert np.corrcoef(detail.ravel(), s)[0, 1] > np.corrcoef(base.ravel(), s)[0, 1]
