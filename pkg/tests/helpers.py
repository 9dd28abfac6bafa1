"""Shared test fixtures: canonical synthetic scenes and independent oracles.

The oracles here are deliberately written as plain per-pixel loops in
double precision, separate from the library's vectorized code paths.
"""

import numpy as np

from depthprop.camera import Intrinsics
from depthprop.synth import (SceneSpec, Sphere, fronto_parallel_plane,
                             linear_trajectory)


def intrinsics_for(res: int) -> Intrinsics:
    return Intrinsics(fx=float(res), fy=float(res), cx=res / 2.0, cy=res / 2.0)


def forward_plane_scene(frames: int = 8, step: float = 0.2, depth: float = 5.0,
                        res: int = 64, seed: int = 7) -> SceneSpec:
    """Camera advancing along +Z toward a fronto-parallel plane."""
    return SceneSpec(geometry=fronto_parallel_plane(depth),
                     trajectory=linear_trajectory((0, 0, 0), (0, 0, step), frames),
                     intrinsics=intrinsics_for(res), resolution=(res, res),
                     texture_seed=seed)


def lateral_plane_scene(frames: int = 8, step: float = 0.3, depth: float = 5.0,
                        res: int = 64, seed: int = 11) -> SceneSpec:
    """Camera translating along +X in front of a fronto-parallel plane."""
    return SceneSpec(geometry=fronto_parallel_plane(depth),
                     trajectory=linear_trajectory((0, 0, 0), (step, 0, 0), frames),
                     intrinsics=intrinsics_for(res), resolution=(res, res),
                     texture_seed=seed)


def sphere_scene(frames: int = 8, step: float = 0.2, res: int = 64,
                 seed: int = 13) -> SceneSpec:
    """Camera advancing toward a sphere that covers the whole view."""
    return SceneSpec(geometry=Sphere(center=(0.0, 0.0, 5.0), radius=3.0),
                     trajectory=linear_trajectory((0, 0, 0), (0, 0, step), frames),
                     intrinsics=intrinsics_for(res), resolution=(res, res),
                     texture_seed=seed)


def static_scene(frames: int = 10, depth: float = 5.0, res: int = 64,
                 seed: int = 3) -> SceneSpec:
    return SceneSpec(geometry=fronto_parallel_plane(depth),
                     trajectory=linear_trajectory((0, 0, 0), (0, 0, 0), frames),
                     intrinsics=intrinsics_for(res), resolution=(res, res),
                     texture_seed=seed)


# ---------------------------------------------------------------------------
# Oracles.

def oracle_bilinear(src, x, y):
    """Clamped bilinear sample of an (H, W) array at one point, in doubles."""
    h, w = src.shape[:2]
    x = min(max(float(x), 0.0), w - 1.0)
    y = min(max(float(y), 0.0), h - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    return ((1 - fx) * (1 - fy) * float(src[y0, x0])
            + fx * (1 - fy) * float(src[y0, x1])
            + (1 - fx) * fy * float(src[y1, x0])
            + fx * fy * float(src[y1, x1]))


def oracle_lower_median(values):
    vals = sorted(float(v) for v in values)
    return vals[(len(vals) - 1) // 2]


def oracle_consistency(p_prev, p_cur, flow, mask):
    """Brute-force translation-compensated radial consistency, per-pixel loops."""
    h, w = p_prev.shape[:2]
    r_prev = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            r_prev[r, c] = np.sqrt(sum(float(p_prev[r, c, a]) ** 2 for a in range(3)))
    warped = np.empty((h, w))
    eff = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            x = c + float(flow[r, c, 0])
            y = r + float(flow[r, c, 1])
            warped[r, c] = oracle_bilinear(r_prev, x, y)
            eff[r, c] = bool(mask[r, c]) and 0 <= x <= w - 1 and 0 <= y <= h - 1
    assert eff.any()
    t = [oracle_lower_median(p_cur[:, :, a][eff]) - oracle_lower_median(p_prev[:, :, a][eff])
         for a in range(3)]
    total = 0.0
    count = 0
    for r in range(h):
        for c in range(w):
            if not eff[r, c]:
                continue
            r_comp = np.sqrt(sum((float(p_cur[r, c, a]) - t[a]) ** 2 for a in range(3)))
            total += abs(warped[r, c] - r_comp)
            count += 1
    return total / count


def oracle_scale_shift(pred, gt, s_range=(-8.0, 8.0), b_range=(-20.0, 20.0),
                       rounds=4, steps=41):
    """Zooming grid search minimizing sum((s * pred + b - gt)^2).

    Returns (s, b, final grid step for each axis).
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    s_lo, s_hi = s_range
    b_lo, b_hi = b_range
    best = None
    for _ in range(rounds):
        ss = np.linspace(s_lo, s_hi, steps)
        bs = np.linspace(b_lo, b_hi, steps)
        errs = ((ss[:, None, None] * pred[None, None, :] + bs[None, :, None]
                 - gt[None, None, :]) ** 2).sum(axis=2)
        i, j = np.unravel_index(np.argmin(errs), errs.shape)
        best = (ss[i], bs[j])
        ds = (s_hi - s_lo) / (steps - 1)
        db = (b_hi - b_lo) / (steps - 1)
        s_lo, s_hi = best[0] - 2 * ds, best[0] + 2 * ds
        b_lo, b_hi = best[1] - 2 * db, best[1] + 2 * db
    return best[0], best[1], (ds, db)


def dyadic_points(rng, shape, scale=1024.0, lo=1, hi=8 * 1024):
    """Random point maps whose float32 values are exact dyadic rationals."""
    ints = rng.integers(lo, hi, size=shape)
    return (ints / scale).astype(np.float32)
