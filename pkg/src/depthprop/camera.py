"""Pinhole geometry: depth <-> 3D point maps and point-cloud statistics.

Pixel-center convention: array index (r, c) corresponds to image
coordinates (u, v) = (c + 0.5, r + 0.5), matching the half-pixel bilinear
convention in :mod:`depthprop.grid` so synthetic flow and warping agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera parameters, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")


def pixel_centers(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """(u, v) image coordinates of every pixel center, each (H, W) float64."""
    us = np.arange(width, dtype=np.float64) + 0.5
    vs = np.arange(height, dtype=np.float64) + 0.5
    return np.meshgrid(us, vs)


def unproject(depth: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Lift a 1-channel depth grid to a 3-channel (X, Y, Z) point map.

    X = (u - cx) * Z / fx, Y = (v - cy) * Z / fy, Z = depth. The Z channel
    is the source depth bit-exact.
    """
    depth = np.asarray(depth)
    if depth.ndim == 2:
        depth = depth[:, :, None]
    if depth.ndim != 3 or depth.shape[2] != 1:
        raise ValueError(f"depth must be 1-channel, got shape {depth.shape}")
    if depth.dtype != np.float64:
        depth = depth.astype(np.float32)
    h, w = depth.shape[:2]
    u, v = pixel_centers(h, w)
    z = depth[:, :, 0]
    x = (u - k.cx) * z / k.fx
    y = (v - k.cy) * z / k.fy
    return np.stack([x, y, z], axis=2).astype(depth.dtype)


def project(p: np.ndarray, k: Intrinsics) -> tuple[float, float]:
    """Project a single 3D point to (u, v) image coordinates. Requires Z > 0."""
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    if z <= 0:
        raise ValueError(f"cannot project point with Z={z} <= 0")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def project_map(p: np.ndarray, k: Intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project a full (H, W, 3) point map; returns (u, v, valid) with valid = Z > 0."""
    p = np.asarray(p)
    z = p[:, :, 2]
    valid = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * p[:, :, 0] / z + k.cx
        v = k.fy * p[:, :, 1] / z + k.cy
    return u, v, valid


def radial_distance(p: np.ndarray) -> np.ndarray:
    """Per-pixel Euclidean norm of an (X, Y, Z) point map, as a 1-channel grid.

    Preserves the input dtype so double-precision point maps stay double.
    """
    p = np.asarray(p)
    if p.ndim != 3 or p.shape[2] != 3:
        raise ValueError(f"point map must be (H, W, 3), got {p.shape}")
    return np.sqrt(np.sum(np.square(p), axis=2))[:, :, None].astype(p.dtype, copy=False)


def lower_median(values: np.ndarray) -> float:
    """Order-statistic median: for even counts, the lower-middle element.

    Unlike an averaging median this is translation-equivariant bit-exactly,
    which the translation-compensated consistency measures rely on.
    """
    values = np.asarray(values).ravel()
    if values.size == 0:
        raise ValueError("median of empty set")
    kth = (values.size - 1) // 2
    return float(np.partition(values, kth)[kth])


def median_center(p: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-axis lower-middle median of the valid points of a point map."""
    p = np.asarray(p)
    if p.ndim != 3 or p.shape[2] != 3:
        raise ValueError(f"point map must be (H, W, 3), got {p.shape}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != p.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match grid {p.shape[:2]}")
    if not mask.any():
        raise ValueError("median_center needs at least one valid pixel")
    sel = p[mask]
    return np.array([lower_median(sel[:, 0]),
                     lower_median(sel[:, 1]),
                     lower_median(sel[:, 2])], dtype=np.float64)
