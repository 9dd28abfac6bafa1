import numpy as np
import pytest

from depthprop.grid import (channel_concat, luma_diff, make_grid,
                            resize_bilinear, sample_bilinear)


def test_resize_constant_field():
    g = make_grid(1, 1, 1, fill=3.0)
    out = resize_bilinear(g, 5, 7)
    assert out.shape == (5, 7, 1)
    assert np.all(out == 3.0)


def test_resize_same_size_identity():
    g = np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32)[:, :, None]
    out = resize_bilinear(g, 2, 2)
    assert np.max(np.abs(out - g)) <= 1e-6


def test_resize_upsample_against_direct_formula():
    g = np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32)[:, :, None]
    out = resize_bilinear(g, 4, 4)
    assert out.min() >= 0.0 and out.max() <= 3.0
    # Half-pixel centers: output (i, j) samples source at (j+0.5)/2 - 0.5.
    coords = [(i + 0.5) * 0.5 - 0.5 for i in range(4)]
    for i in (1, 2):
        for j in (1, 2):
            x, y = coords[j], coords[i]
            x0, y0 = int(np.floor(x)), int(np.floor(y))
            fx, fy = x - x0, y - y0
            expected = ((1 - fx) * (1 - fy) * g[y0, x0, 0]
                        + fx * (1 - fy) * g[y0, x0 + 1, 0]
                        + (1 - fx) * fy * g[y0 + 1, x0, 0]
                        + fx * fy * g[y0 + 1, x0 + 1, 0])
            assert abs(out[i, j, 0] - expected) <= 1e-6


def test_resize_rejects_zero_target():
    g = make_grid(2, 2, 1)
    with pytest.raises(ValueError):
        resize_bilinear(g, 0, 4)
    with pytest.raises(ValueError):
        resize_bilinear(g, 4, 0)


def test_resize_identity_and_bounds_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        h, w, c = rng.integers(1, 9, size=3)
        g = rng.normal(size=(h, w, c)).astype(np.float32)
        same = resize_bilinear(g, h, w)
        assert np.max(np.abs(same - g)) <= 1e-6
        nh, nw = rng.integers(1, 17, size=2)
        out = resize_bilinear(g, nh, nw)
        assert out.min() >= g.min() - 1e-6
        assert out.max() <= g.max() + 1e-6


def test_luma_diff_identical_frames():
    rgb = np.random.default_rng(1).random((4, 5, 3)).astype(np.float32)
    assert np.all(luma_diff(rgb, rgb) == 0.0)


def test_luma_diff_white_minus_black():
    white = make_grid(3, 3, 3, fill=1.0)
    black = make_grid(3, 3, 3, fill=0.0)
    out = luma_diff(white, black)
    assert np.allclose(out, 1.0, atol=1e-6)


def test_luma_diff_red_coefficient():
    red = make_grid(2, 2, 3)
    red[:, :, 0] = 1.0
    black = make_grid(2, 2, 3)
    out = luma_diff(red, black)
    assert np.allclose(out, 0.299, atol=1e-6)


def test_luma_diff_antisymmetric_exact():
    rng = np.random.default_rng(2)
    a = rng.random((6, 4, 3)).astype(np.float32)
    b = rng.random((6, 4, 3)).astype(np.float32)
    assert np.array_equal(luma_diff(a, b), -luma_diff(b, a))


def test_luma_diff_rejects_mismatch():
    with pytest.raises(ValueError):
        luma_diff(make_grid(2, 2, 3), make_grid(2, 3, 3))


def test_concat_shapes_and_order():
    a = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
    b = np.arange(18, dtype=np.float32).reshape(2, 3, 3) + 100
    out = channel_concat(a, b)
    assert out.shape == (2, 3, 5)
    assert np.array_equal(out[:, :, :2], a)
    assert np.array_equal(out[:, :, 2:], b)


def test_concat_round_trip_and_definition():
    rng = np.random.default_rng(3)
    a = rng.random((3, 3, 4)).astype(np.float32)
    z = np.zeros((3, 3, 2), dtype=np.float32)
    assert np.array_equal(channel_concat(a, z)[:, :, :4], a)
    out = channel_concat(a, z)
    for c in range(2):
        assert np.all(out[:, :, 4 + c] == z[:, :, c])


def test_concat_associative():
    rng = np.random.default_rng(4)
    a, b, c = (rng.random((2, 2, n)).astype(np.float32) for n in (1, 2, 3))
    left = channel_concat(channel_concat(a, b), c)
    right = channel_concat(a, channel_concat(b, c))
    assert np.array_equal(left, right)


def test_concat_rejects_spatial_mismatch():
    with pytest.raises(ValueError):
        channel_concat(make_grid(2, 2, 1), make_grid(3, 2, 1))


def test_sample_bilinear_zero_pad_edge():
    src = np.ones((2, 2, 1), dtype=np.float32)
    val = sample_bilinear(src, np.array([[-0.5]]), np.array([[0.0]]), pad="zeros")
    assert abs(val[0, 0, 0] - 0.5) <= 1e-6
