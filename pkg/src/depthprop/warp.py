"""Flow-based backward warping and the statistics driving keyframe selection.

A flow field is a 2-channel grid: channel 0 is the horizontal displacement
u, channel 1 the vertical displacement v, both in pixels. Flow is
*backward*: for a pixel p of the current frame, p + flow(p) is where that
content sat in the previous frame.
"""

from __future__ import annotations

import numpy as np

from .grid import as_grid, inside_bounds, sample_bilinear


def _flow_targets(flow: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = flow.shape[:2]
    xs = np.arange(w, dtype=np.float64)[None, :] + flow[:, :, 0].astype(np.float64)
    ys = np.arange(h, dtype=np.float64)[:, None] + flow[:, :, 1].astype(np.float64)
    return xs, ys


def _as_raster(a: np.ndarray) -> np.ndarray:
    # Like grid.as_grid but keeps float64 payloads double precision.
    a = np.asarray(a)
    if a.dtype != np.float64:
        a = a.astype(np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"expected 2D or 3D array, got shape {a.shape}")
    return np.ascontiguousarray(a)


def backward_warp(src: np.ndarray, flow: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Resample src at p + flow(p) for every pixel p.

    Sampling clamps to the source edge; the returned bool mask is True only
    where the bilinear footprint lies fully inside src, so edge-clamped
    pixels are flagged invalid rather than silently extrapolated.
    """
    src = _as_raster(src)
    flow = as_grid(flow)
    if flow.shape[2] != 2:
        raise ValueError(f"flow must be 2-channel, got {flow.shape[2]}")
    if src.shape[:2] != flow.shape[:2]:
        raise ValueError(f"src {src.shape[:2]} and flow {flow.shape[:2]} dims differ")
    xs, ys = _flow_targets(flow)
    out = sample_bilinear(src, xs, ys, pad="edge")
    mask = inside_bounds(xs, ys, src.shape[0], src.shape[1])
    return out, mask


def fb_consistency_mask(flow_bwd: np.ndarray, flow_fwd: np.ndarray,
                        alpha: float = 0.01, beta: float = 0.5) -> np.ndarray:
    """Forward-backward round-trip occlusion check.

    Pixel p is valid iff
      |flow_bwd(p) + flow_fwd(p + flow_bwd(p))|^2
        <= alpha * (|flow_bwd(p)|^2 + |sampled flow_fwd|^2) + beta^2
    with the forward flow sampled bilinearly (edge clamped).
    """
    flow_bwd = as_grid(flow_bwd)
    flow_fwd = as_grid(flow_fwd)
    if flow_bwd.shape != flow_fwd.shape:
        raise ValueError(f"flow shape mismatch: {flow_bwd.shape} vs {flow_fwd.shape}")
    xs, ys = _flow_targets(flow_bwd)
    fwd_at = sample_bilinear(flow_fwd, xs, ys, pad="edge").astype(np.float64)
    bwd = flow_bwd.astype(np.float64)
    residual = bwd + fwd_at
    lhs = np.sum(residual ** 2, axis=2)
    rhs = alpha * (np.sum(bwd ** 2, axis=2) + np.sum(fwd_at ** 2, axis=2)) + beta ** 2
    return lhs <= rhs


def coverage(flow: np.ndarray) -> float:
    """Mean of an all-ones grid backward-warped with zero padding.

    Out-of-bounds taps contribute 0, so this is the fraction of the current
    frame whose content can be explained by the previous frame; in [0, 1].
    """
    flow = as_grid(flow)
    h, w = flow.shape[:2]
    ones = np.ones((h, w, 1), dtype=np.float64)
    xs, ys = _flow_targets(flow)
    warped = sample_bilinear(ones, xs, ys, pad="zeros")
    return float(np.mean(warped))


def flow_mean_norm(flow: np.ndarray, img_w: int, img_h: int) -> float:
    """Mean per-pixel 2-norm of the flow normalized per axis by image size."""
    flow = as_grid(flow)
    u = flow[:, :, 0].astype(np.float64) / img_w
    v = flow[:, :, 1].astype(np.float64) / img_h
    return float(np.mean(np.hypot(u, v)))
