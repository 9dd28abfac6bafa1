"""File formats: PFM (float raster), .flo (flow), P6 PPM (8-bit RGB), and
the TEN1 float-tensor container used for feature pyramids.

All write/read pairs are bit-exact round trips on their native payloads.
"""

from __future__ import annotations

import struct

import numpy as np

FLO_MAGIC = 202021.25
MAX_DIM = 1 << 20


class CodecError(Exception):
    """Malformed or truncated file content."""


def _check_dims(*dims: int) -> None:
    for d in dims:
        if not (1 <= d <= MAX_DIM):
            raise CodecError(f"dimension {d} out of range [1, {MAX_DIM}]")


# ---------------------------------------------------------------------------
# PFM: grayscale float map, bottom-to-top rows, negative scale = little endian.

def write_pfm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 3:
        if data.shape[2] != 1:
            raise CodecError(f"PFM writer takes 1 channel, got {data.shape[2]}")
        data = data[:, :, 0]
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().rstrip()
        if magic != b"Pf":
            raise CodecError(f"{path}: bad PFM magic {magic!r} (only 1-channel 'Pf' supported)")
        try:
            w, h = (int(tok) for tok in f.readline().split())
            scale = float(f.readline())
        except ValueError as e:
            raise CodecError(f"{path}: malformed PFM header: {e}") from None
        _check_dims(w, h)
        dtype = "<f4" if scale < 0 else ">f4"
        buf = f.read(4 * w * h)
        if len(buf) != 4 * w * h:
            raise CodecError(f"{path}: truncated PFM payload")
        data = np.frombuffer(buf, dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float32)[:, :, None]


# ---------------------------------------------------------------------------
# .flo: float magic, u32 width/height, interleaved (u, v) float32.

def write_flo(path, flow: np.ndarray) -> None:
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise CodecError(f"flow must be (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(struct.pack("<f", FLO_MAGIC))
        f.write(struct.pack("<II", w, h))
        f.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flo(path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) != 12:
            raise CodecError(f"{path}: truncated .flo header")
        (magic,) = struct.unpack("<f", head[:4])
        if magic != FLO_MAGIC:
            raise CodecError(f"{path}: bad .flo magic {magic}")
        w, h = struct.unpack("<II", head[4:])
        _check_dims(w, h)
        buf = f.read(8 * w * h)
        if len(buf) != 8 * w * h:
            raise CodecError(f"{path}: truncated .flo payload")
        return np.frombuffer(buf, dtype="<f4").reshape(h, w, 2).copy()


# ---------------------------------------------------------------------------
# P6 PPM: binary 8-bit RGB, maxval 255.

def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8:
        raise CodecError(f"PPM writer takes uint8, got {rgb.dtype}")
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise CodecError(f"PPM writer takes (H, W, 3), got {rgb.shape}")
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(rgb).tobytes())


def _ppm_token(f) -> bytes:
    # Skip whitespace and '#' comments, then read one token.
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise CodecError("unexpected end of PPM header")
        if c == b"#":
            while c and c != b"\n":
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _ppm_token(f) != b"P6":
            raise CodecError(f"{path}: bad PPM magic")
        try:
            w = int(_ppm_token(f))
            h = int(_ppm_token(f))
            maxval = int(_ppm_token(f))
        except ValueError as e:
            raise CodecError(f"{path}: malformed PPM header: {e}") from None
        if maxval != 255:
            raise CodecError(f"{path}: only maxval 255 supported, got {maxval}")
        _check_dims(w, h)
        buf = f.read(3 * w * h)
        if len(buf) != 3 * w * h:
            raise CodecError(f"{path}: truncated PPM payload")
        return np.frombuffer(buf, dtype=np.uint8).reshape(h, w, 3).copy()


def rgb_to_u8(rgb: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] float RGB grid to 8-bit."""
    return np.clip(np.rint(np.asarray(rgb, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def u8_to_rgb(data: np.ndarray) -> np.ndarray:
    return (np.asarray(data, dtype=np.float32) / np.float32(255.0))


# ---------------------------------------------------------------------------
# TEN1: "TEN1" magic, u32 ndim, u32 dims[ndim], float32 LE payload.
# A pyramid file is a u32 tensor count followed by that many TEN1 records.

TEN1_MAGIC = b"TEN1"


def _write_ten1_record(f, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    f.write(TEN1_MAGIC)
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_ten1_record(f, path) -> np.ndarray:
    if f.read(4) != TEN1_MAGIC:
        raise CodecError(f"{path}: bad TEN1 magic")
    head = f.read(4)
    if len(head) != 4:
        raise CodecError(f"{path}: truncated TEN1 header")
    (ndim,) = struct.unpack("<I", head)
    if not (1 <= ndim <= 8):
        raise CodecError(f"{path}: unreasonable TEN1 rank {ndim}")
    dims_buf = f.read(4 * ndim)
    if len(dims_buf) != 4 * ndim:
        raise CodecError(f"{path}: truncated TEN1 dims")
    dims = struct.unpack(f"<{ndim}I", dims_buf)
    _check_dims(*dims)
    count = int(np.prod(dims))
    buf = f.read(4 * count)
    if len(buf) != 4 * count:
        raise CodecError(f"{path}: truncated TEN1 payload")
    return np.frombuffer(buf, dtype="<f4").reshape(dims).copy()


def write_ten1(path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        _write_ten1_record(f, arr)


def read_ten1(path) -> np.ndarray:
    with open(path, "rb") as f:
        return _read_ten1_record(f, path)


def write_pyramid(path, levels: list[np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(levels)))
        for level in levels:
            _write_ten1_record(f, level)


def read_pyramid(path) -> list[np.ndarray]:
    with open(path, "rb") as f:
        head = f.read(4)
        if len(head) != 4:
            raise CodecError(f"{path}: truncated pyramid index")
        (count,) = struct.unpack("<I", head)
        if count > 64:
            raise CodecError(f"{path}: unreasonable pyramid tensor count {count}")
        return [_read_ten1_record(f, path) for _ in range(count)]
