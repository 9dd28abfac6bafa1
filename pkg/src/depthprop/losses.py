"""Objective suite evaluated as measurement functions (no gradients).

Includes the scale-invariant log error, clip-level scale-shift-invariant
L1, pyramid feature alignment, flow L1, and the translation-compensated
radial-distance consistency measure with its bidirectional wrapper.
Reductions run in double precision; only valid pixels participate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import median_center, radial_distance
from .propnet import check_pyramid
from .warp import backward_warp

DEGENERATE_VAR = 1e-12


@dataclass
class LossReport:
    """Bundle of diagnostic loss values; None where inputs were unavailable."""

    si_log: float | None = None
    l1_ssi: float | None = None
    feature: float | None = None
    flow_l1: float | None = None
    consistency: float | None = None
    valid_pixel_count: int = 0


def _plane(a: np.ndarray) -> np.ndarray:
    """Channel 0 of a grid (or a bare (H, W) array) as float64."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 3:
        a = a[:, :, 0]
    if a.ndim != 2:
        raise ValueError(f"expected a 2D raster, got shape {a.shape}")
    return a


def _masked(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match grid {values.shape[:2]}")
    if not mask.any():
        raise ValueError("no valid pixels")
    return values[mask]


def si_log(gt: np.ndarray, pred: np.ndarray, mask: np.ndarray,
           variance_weight: float = 0.85) -> float:
    """Scale-invariant log error sqrt(mean(g^2) - lam * mean(g)^2), g = log(pred/gt).

    variance_weight = 1 makes the value fully invariant to global rescaling
    of pred.
    """
    gt = _plane(gt)
    pred = _plane(pred)
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch: {gt.shape} vs {pred.shape}")
    g_vals = _masked(gt, mask)
    p_vals = _masked(pred, mask)
    if (g_vals <= 0).any() or (p_vals <= 0).any():
        raise ValueError("si_log requires positive depths on valid pixels")
    g = np.log(p_vals) - np.log(g_vals)
    val = np.mean(g ** 2) - variance_weight * np.mean(g) ** 2
    return float(np.sqrt(max(val, 0.0)))


def fit_scale_shift(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float, bool]:
    """Closed-form least squares of s * pred + b = gt over flat value arrays.

    Returns (scale, shift, degenerate); a (near-)constant pred falls back to
    the shift-only fit with scale 1.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    n = pred.size
    if n == 0:
        raise ValueError("cannot fit on zero pixels")
    mp = pred.mean()
    mg = gt.mean()
    var = np.mean((pred - mp) ** 2)
    if var <= DEGENERATE_VAR:
        return 1.0, float(mg - mp), True
    cov = np.mean((pred - mp) * (gt - mg))
    s = cov / var
    return float(s), float(mg - s * mp), False


def l1_ssi(gt_clip: list[np.ndarray], pred_clip: list[np.ndarray],
           masks: list[np.ndarray]) -> float:
    """Mean absolute error after one clip-global scale/shift fit of pred to gt."""
    if not (len(gt_clip) == len(pred_clip) == len(masks)):
        raise ValueError("clip lengths disagree")
    if not gt_clip:
        raise ValueError("empty clip")
    gt_all, pred_all = [], []
    for gt, pred, mask in zip(gt_clip, pred_clip, masks):
        gt_all.append(_masked(_plane(gt), mask))
        pred_all.append(_masked(_plane(pred), mask))
    gt_v = np.concatenate(gt_all)
    pred_v = np.concatenate(pred_all)
    s, b, _ = fit_scale_shift(pred_v, gt_v)
    return float(np.mean(np.abs(s * pred_v + b - gt_v)))


def feature_loss(ref: list[np.ndarray], cur: list[np.ndarray]) -> float:
    """Sum over pyramid levels of the channel-averaged mean absolute difference."""
    check_pyramid(ref)
    check_pyramid(cur)
    total = 0.0
    for i, (r, c) in enumerate(zip(ref, cur)):
        if r.shape != c.shape:
            raise ValueError(f"level {i} shape mismatch: {r.shape} vs {c.shape}")
        total += float(np.mean(np.abs(r.astype(np.float64) - c.astype(np.float64))))
    return total


def flow_l1(gt_flow: np.ndarray, pred_flow: np.ndarray, mask: np.ndarray) -> float:
    """Mean over valid pixels of |du| + |dv| in pixels."""
    gt_flow = np.asarray(gt_flow, dtype=np.float64)
    pred_flow = np.asarray(pred_flow, dtype=np.float64)
    if gt_flow.shape != pred_flow.shape:
        raise ValueError(f"flow shape mismatch: {gt_flow.shape} vs {pred_flow.shape}")
    diff = np.abs(gt_flow - pred_flow)
    vals = _masked(diff, mask)
    return float(np.mean(np.sum(vals, axis=1)))


def compensated_radial_pair(p_prev: np.ndarray, p_cur: np.ndarray, flow: np.ndarray,
                            mask: np.ndarray, compensate: bool = True
                            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared geometry core of the consistency measures.

    Warps the previous frame's radial distances onto the current grid,
    estimates the inter-frame translation as the difference of per-axis
    lower-middle medians over mutually valid pixels, and returns
    (warped radial, translation-compensated current radial, effective mask),
    all double precision.
    """
    p_prev = np.asarray(p_prev, dtype=np.float64)
    p_cur = np.asarray(p_cur, dtype=np.float64)
    if p_prev.shape != p_cur.shape:
        raise ValueError(f"point map shape mismatch: {p_prev.shape} vs {p_cur.shape}")
    mask = np.asarray(mask, dtype=bool)
    r_prev = radial_distance(p_prev)
    r_warped, warp_mask = backward_warp(r_prev, flow)
    eff = mask & warp_mask
    if not eff.any():
        raise ValueError("no valid pixels after combining mask with warp validity")
    if compensate:
        t = median_center(p_cur, eff) - median_center(p_prev, eff)
    else:
        t = np.zeros(3)
    r_comp = radial_distance(p_cur - t)
    return r_warped[:, :, 0], r_comp[:, :, 0], eff


def consistency_loss(p_prev: np.ndarray, p_cur: np.ndarray, flow: np.ndarray,
                     mask: np.ndarray) -> float:
    """Translation-compensated radial consistency between consecutive point maps.

    Mean absolute difference, over valid pixels, between the flow-warped
    radial field of the previous frame and the current frame's radial field
    after subtracting the median-based translation estimate.
    """
    r_warped, r_comp, eff = compensated_radial_pair(p_prev, p_cur, flow, mask)
    return float(np.mean(np.abs(r_warped[eff] - r_comp[eff])))


def consistency_bidirectional(p_prev: np.ndarray, p_cur: np.ndarray,
                              flow_bwd: np.ndarray, flow_fwd: np.ndarray,
                              mask_bwd: np.ndarray, mask_fwd: np.ndarray) -> float:
    """Sum of the consistency measure evaluated in both temporal directions."""
    return (consistency_loss(p_prev, p_cur, flow_bwd, mask_bwd)
            + consistency_loss(p_cur, p_prev, flow_fwd, mask_fwd))
