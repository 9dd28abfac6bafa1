"""Dense raster primitives shared by the whole pipeline.

A "grid" is a C-contiguous float32 ndarray of shape (H, W, C) — channel
interleaved, row major. Validity masks are (H, W) bool arrays. All
functions here are pure; none mutates its inputs.

Sampling convention: pixel centers sit at half-integer offsets, so the
continuous image spans [0, W] x [0, H] and array index (r, c) is the
sample at (x, y) = (c, r). Out-of-range samples clamp to the edge unless
a zero-padding mode is requested explicitly.
"""

from __future__ import annotations

import numpy as np

# Rec.601 luma weights (R, G, B).
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def make_grid(height: int, width: int, channels: int, fill: float = 0.0) -> np.ndarray:
    """Allocate an (H, W, C) float32 grid filled with a constant."""
    if height < 1 or width < 1 or channels < 1:
        raise ValueError(f"grid dims must be >= 1, got {height}x{width}x{channels}")
    return np.full((height, width, channels), fill, dtype=np.float32)


def as_grid(a: np.ndarray) -> np.ndarray:
    """Coerce an array to (H, W, C) float32; (H, W) inputs gain a channel axis."""
    a = np.asarray(a, dtype=np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"expected 2D or 3D array, got shape {a.shape}")
    return np.ascontiguousarray(a)


def sample_bilinear(src: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                    pad: str = "edge") -> np.ndarray:
    """Bilinearly sample src at continuous coordinates (xs, ys).

    src is (H, W, C); xs/ys share any common shape S and are expressed in
    array-index units (integer coordinates hit pixel centers exactly).
    pad="edge" clamps out-of-range taps; pad="zeros" gives them value 0.
    Returns an array of shape S + (C,) in src's dtype.
    """
    if src.ndim != 3:
        raise ValueError(f"src must be (H, W, C), got shape {src.shape}")
    if pad not in ("edge", "zeros"):
        raise ValueError(f"unknown pad mode {pad!r}")
    h, w = src.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)

    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1

    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y1, 0, h - 1)

    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    if pad == "zeros":
        # A tap contributes only when it falls inside the raster.
        w00 = w00 * ((x0 >= 0) & (x0 <= w - 1) & (y0 >= 0) & (y0 <= h - 1))
        w01 = w01 * ((x1 >= 0) & (x1 <= w - 1) & (y0 >= 0) & (y0 <= h - 1))
        w10 = w10 * ((x0 >= 0) & (x0 <= w - 1) & (y1 >= 0) & (y1 <= h - 1))
        w11 = w11 * ((x1 >= 0) & (x1 <= w - 1) & (y1 >= 0) & (y1 <= h - 1))

    out = (w00[..., None] * src[y0c, x0c]
           + w01[..., None] * src[y0c, x1c]
           + w10[..., None] * src[y1c, x0c]
           + w11[..., None] * src[y1c, x1c])
    return out.astype(src.dtype, copy=False)


def inside_bounds(xs: np.ndarray, ys: np.ndarray, h: int, w: int) -> np.ndarray:
    """True where the bilinear footprint of (xs, ys) lies fully in bounds."""
    return (xs >= 0.0) & (xs <= w - 1.0) & (ys >= 0.0) & (ys <= h - 1.0)


def resize_bilinear(g: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Resize a grid with half-pixel-center bilinear sampling.

    Output pixel i samples the source at (i + 0.5) * scale - 0.5, so a
    same-size resize is the exact identity and every output value is a
    convex combination of inputs.
    """
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target size must be >= 1, got {new_h}x{new_w}")
    g = as_grid(g)
    h, w = g.shape[:2]
    xs = (np.arange(new_w, dtype=np.float64) + 0.5) * (w / new_w) - 0.5
    ys = (np.arange(new_h, dtype=np.float64) + 0.5) * (h / new_h) - 0.5
    xg, yg = np.meshgrid(xs, ys)
    return sample_bilinear(g, xg, yg, pad="edge")


def luma(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma of a 3-channel grid, returned as 1 channel."""
    rgb = as_grid(rgb)
    if rgb.shape[2] != 3:
        raise ValueError(f"expected 3 channels, got {rgb.shape[2]}")
    r, gch, b = LUMA_WEIGHTS
    out = r * rgb[:, :, 0] + gch * rgb[:, :, 1] + b * rgb[:, :, 2]
    return out.astype(np.float32)[:, :, None]


def luma_diff(rgb_t: np.ndarray, rgb_prev: np.ndarray) -> np.ndarray:
    """Per-pixel luma(rgb_t) - luma(rgb_prev) as a 1-channel grid."""
    rgb_t = as_grid(rgb_t)
    rgb_prev = as_grid(rgb_prev)
    if rgb_t.shape != rgb_prev.shape:
        raise ValueError(f"shape mismatch: {rgb_t.shape} vs {rgb_prev.shape}")
    return luma(rgb_t) - luma(rgb_prev)


def channel_concat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Concatenate two grids along the channel axis (a's channels first)."""
    a = as_grid(a)
    b = as_grid(b)
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"spatial mismatch: {a.shape[:2]} vs {b.shape[:2]}")
    return np.concatenate([a, b], axis=2)
