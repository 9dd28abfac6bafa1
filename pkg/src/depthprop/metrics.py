"""Evaluation protocol: accuracy (delta1), temporal consistency (tau5),
their scale-shift-invariant variants, and sequence/dataset aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, unproject
from .losses import _masked, _plane, compensated_radial_pair, fit_scale_shift

TAU_REL = 0.05
DELTA_THRESHOLD = 1.25


@dataclass
class FrameMetrics:
    """Per-frame scores; tau5 is None on the first frame of a sequence."""

    delta1: float
    tau5: float | None
    valid_pixels: int
    delta1_ssi: float | None = None
    tau5_ssi: float | None = None


@dataclass
class AlignmentParams:
    """Least-squares scale/shift mapping a prediction onto ground truth.

    ``degenerate`` marks a shift-only fallback (constant prediction) or a
    non-positive fitted scale.
    """

    scale: float
    shift: float
    degenerate: bool = False


@dataclass
class SequenceSummary:
    delta1: float
    tau5: float | None
    frames: int
    delta1_ssi: float | None = None
    tau5_ssi: float | None = None


def delta1(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray,
           form: str = "ratio", threshold: float = DELTA_THRESHOLD) -> float:
    """Fraction of valid pixels whose prediction agrees with ground truth.

    form="ratio" (default): max(pred/gt, gt/pred) <= threshold, inclusive
    and symmetric. form="relative": |pred - gt| / gt <= threshold - 1.
    """
    pred = _plane(pred)
    gt = _plane(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    p = _masked(pred, mask)
    g = _masked(gt, mask)
    if (p <= 0).any() or (g <= 0).any():
        raise ValueError("delta1 requires positive depths on valid pixels")
    if form == "ratio":
        inlier = np.maximum(p / g, g / p) <= threshold
    elif form == "relative":
        inlier = np.abs(p - g) / g <= threshold - 1.0
    else:
        raise ValueError(f"unknown delta1 form {form!r}")
    return float(np.mean(inlier))


def ssi_align(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray,
              domain: str = "depth") -> AlignmentParams:
    """Per-frame least-squares (scale, shift) from prediction to ground truth.

    domain="depth" fits in depth; domain="disparity" fits on reciprocals
    (for predictions produced in disparity space).
    """
    p = _masked(_plane(pred), mask)
    g = _masked(_plane(gt), mask)
    if domain == "disparity":
        if (p <= 0).any() or (g <= 0).any():
            raise ValueError("disparity alignment requires positive values")
        p, g = 1.0 / p, 1.0 / g
    elif domain != "depth":
        raise ValueError(f"unknown alignment domain {domain!r}")
    s, b, degenerate = fit_scale_shift(p, g)
    return AlignmentParams(scale=s, shift=b, degenerate=degenerate or s <= 0)


def apply_alignment(pred: np.ndarray, params: AlignmentParams,
                    domain: str = "depth") -> np.ndarray:
    """Map a prediction grid through fitted alignment parameters."""
    pred = np.asarray(pred)
    if domain == "depth":
        out = params.scale * pred + params.shift
    elif domain == "disparity":
        disp = params.scale / pred + params.shift
        out = 1.0 / np.maximum(disp, 1e-9)
    else:
        raise ValueError(f"unknown alignment domain {domain!r}")
    return out.astype(pred.dtype, copy=False)


def align_to(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray,
             domain: str = "depth") -> np.ndarray:
    """Convenience: fit and apply per-frame alignment in one call."""
    return apply_alignment(pred, ssi_align(pred, gt, mask, domain), domain)


def tau5(pred_prev: np.ndarray, pred_cur: np.ndarray, flow: np.ndarray,
         k: Intrinsics, mask: np.ndarray, compensate: bool = True,
         rel: float = TAU_REL) -> float:
    """Temporal consistency: inlier fraction of warped vs current radial distance.

    Both depths are unprojected; the previous frame's radial field is warped
    by the backward flow and compared with the current frame's radial field
    after ego-motion (median translation) compensation. A pixel is an inlier
    when |r_warped - r_comp| <= rel * r_comp.
    """
    p_prev = unproject(np.asarray(pred_prev, dtype=np.float64), k)
    p_cur = unproject(np.asarray(pred_cur, dtype=np.float64), k)
    r_warped, r_comp, eff = compensated_radial_pair(p_prev, p_cur, flow, mask,
                                                    compensate=compensate)
    inlier = np.abs(r_warped[eff] - r_comp[eff]) <= rel * r_comp[eff]
    return float(np.mean(inlier))


def delta1_ssi(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray,
               form: str = "ratio", domain: str = "depth") -> float:
    """delta1 after per-frame scale/shift alignment of the prediction."""
    return delta1(align_to(pred, gt, mask, domain), gt, mask, form=form)


def tau5_ssi(pred_prev: np.ndarray, gt_prev: np.ndarray,
             pred_cur: np.ndarray, gt_cur: np.ndarray,
             flow: np.ndarray, k: Intrinsics, mask: np.ndarray,
             domain: str = "depth", compensate: bool = True,
             mask_prev: np.ndarray | None = None) -> float:
    """tau5 with each frame independently aligned to its own ground truth.

    mask_prev selects the previous frame's pixels used for its alignment fit
    (defaults to the shared mask).
    """
    a_prev = align_to(pred_prev, gt_prev, mask if mask_prev is None else mask_prev, domain)
    a_cur = align_to(pred_cur, gt_cur, mask, domain)
    return tau5(a_prev, a_cur, flow, k, mask, compensate=compensate)


def _mean_or_none(vals: list[float | None]) -> float | None:
    present = [v for v in vals if v is not None]
    return float(np.mean(present)) if present else None


def aggregate(per_frame: list[FrameMetrics]) -> SequenceSummary:
    """Unweighted mean over frames; tau5 skips frames without a predecessor."""
    if not per_frame:
        raise ValueError("cannot aggregate zero frames")
    return SequenceSummary(
        delta1=float(np.mean([m.delta1 for m in per_frame])),
        tau5=_mean_or_none([m.tau5 for m in per_frame]),
        frames=len(per_frame),
        delta1_ssi=_mean_or_none([m.delta1_ssi for m in per_frame]),
        tau5_ssi=_mean_or_none([m.tau5_ssi for m in per_frame]),
    )


def aggregate_dataset(summaries: list[SequenceSummary]) -> SequenceSummary:
    """Unweighted mean over sequence summaries."""
    if not summaries:
        raise ValueError("cannot aggregate zero sequences")
    return SequenceSummary(
        delta1=float(np.mean([s.delta1 for s in summaries])),
        tau5=_mean_or_none([s.tau5 for s in summaries]),
        frames=sum(s.frames for s in summaries),
        delta1_ssi=_mean_or_none([s.delta1_ssi for s in summaries]),
        tau5_ssi=_mean_or_none([s.tau5_ssi for s in summaries]),
    )
