import numpy as np
import pytest

from depthprop.warp import (backward_warp, coverage, fb_consistency_mask,
                            flow_mean_norm)


def constant_flow(h, w, u, v):
    flow = np.empty((h, w, 2), dtype=np.float32)
    flow[:, :, 0] = u
    flow[:, :, 1] = v
    return flow


def test_zero_flow_identity_exact():
    rng = np.random.default_rng(0)
    src = rng.normal(size=(6, 7, 3)).astype(np.float32)
    out, mask = backward_warp(src, constant_flow(6, 7, 0.0, 0.0))
    assert np.max(np.abs(out - src)) <= 1e-6
    assert mask.all()


def test_ramp_shift():
    h, w = 8, 16
    src = np.tile(np.arange(w, dtype=np.float32), (h, 1))[:, :, None]
    out, mask = backward_warp(src, constant_flow(h, w, 1.0, 0.0))
    # Interior columns shift exactly; last column samples out of bounds.
    assert np.allclose(out[:, : w - 1, 0],
                       np.tile(np.arange(1, w, dtype=np.float32), (h, 1)), atol=1e-6)
    assert mask[:, : w - 1].all()
    assert not mask[:, w - 1].any()


def test_all_out_of_bounds():
    src = np.ones((4, 5, 1), dtype=np.float32)
    _, mask = backward_warp(src, constant_flow(4, 5, 10.0, 0.0))
    assert not mask.any()


def test_warp_rejects_mismatch():
    with pytest.raises(ValueError):
        backward_warp(np.ones((4, 4, 1), dtype=np.float32),
                      constant_flow(4, 5, 0.0, 0.0))


def test_warp_linearity():
    rng = np.random.default_rng(1)
    for _ in range(100):
        h, w = rng.integers(2, 9, size=2)
        x = rng.normal(size=(h, w, 2)).astype(np.float32)
        y = rng.normal(size=(h, w, 2)).astype(np.float32)
        flow = rng.uniform(-3, 3, size=(h, w, 2)).astype(np.float32)
        a, b = rng.uniform(-2, 2, size=2)
        lhs, mask = backward_warp(a * x + b * y, flow)
        wx, _ = backward_warp(x, flow)
        wy, _ = backward_warp(y, flow)
        rhs = a * wx + b * wy
        if mask.any():
            assert np.max(np.abs(lhs[mask] - rhs[mask])) <= 1e-5


def test_fb_mask_consistent_pair_all_valid():
    bwd = constant_flow(6, 6, 2.5, -1.0)
    fwd = -bwd
    assert fb_consistency_mask(bwd, fwd).all()


def test_fb_mask_inconsistent_pair_all_invalid():
    bwd = constant_flow(6, 6, 10.0, 0.0)
    fwd = constant_flow(6, 6, 10.0, 0.0)
    assert not fb_consistency_mask(bwd, fwd).any()


def test_fb_mask_zero_flows_valid():
    z = constant_flow(3, 3, 0.0, 0.0)
    assert fb_consistency_mask(z, z).all()


def test_fb_mask_swap_symmetry_for_opposite_constants():
    bwd = constant_flow(5, 5, 1.5, 0.5)
    fwd = -bwd
    m1 = fb_consistency_mask(bwd, fwd)
    m2 = fb_consistency_mask(fwd, bwd)
    assert np.array_equal(m1, m2)


def test_coverage_zero_flow():
    assert coverage(constant_flow(8, 8, 0.0, 0.0)) == pytest.approx(1.0)


def test_coverage_full_shift():
    w = 16
    assert coverage(constant_flow(8, w, float(w), 0.0)) == pytest.approx(0.0)


def test_coverage_half_shift():
    w = 64
    cov = coverage(constant_flow(8, w, w / 2.0, 0.0))
    assert abs(cov - 0.5) <= 1.0 / w + 1e-9


def test_coverage_monotone_in_magnitude():
    prev = 1.1
    for u in np.linspace(0.0, 40.0, 17):
        cov = coverage(constant_flow(16, 32, float(u), 0.0))
        assert cov <= prev + 1e-12
        prev = cov


def test_flow_mean_norm():
    assert flow_mean_norm(constant_flow(4, 4, 0.0, 0.0), 4, 4) == 0.0
    assert flow_mean_norm(constant_flow(4, 8, 8.0, 0.0), 8, 4) == pytest.approx(1.0)
    assert flow_mean_norm(constant_flow(4, 20, 2.0, 0.0), 20, 4) == pytest.approx(0.1)
