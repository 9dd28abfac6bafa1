import struct

import numpy as np
import pytest

from depthprop.codecs import (CodecError, read_flo, read_pfm, read_ppm,
                              read_pyramid, read_ten1, rgb_to_u8, u8_to_rgb,
                              write_flo, write_pfm, write_ppm, write_pyramid,
                              write_ten1)


def test_pfm_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(scale=100.0, size=(2, 2, 1)).astype(np.float32)
    path = tmp_path / "x.pfm"
    write_pfm(path, data)
    assert np.array_equal(read_pfm(path), data)


def test_pfm_round_trip_larger(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.normal(size=(17, 23)).astype(np.float32)
    path = tmp_path / "y.pfm"
    write_pfm(path, data)
    assert np.array_equal(read_pfm(path)[:, :, 0], data)


def test_pfm_rejects_color_magic(tmp_path):
    path = tmp_path / "c.pfm"
    path.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
    with pytest.raises(CodecError):
        read_pfm(path)


def test_pfm_rejects_truncated(tmp_path):
    path = tmp_path / "t.pfm"
    path.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 10)
    with pytest.raises(CodecError):
        read_pfm(path)


def test_flo_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    flow = rng.normal(scale=5.0, size=(9, 13, 2)).astype(np.float32)
    path = tmp_path / "f.flo"
    write_flo(path, flow)
    assert np.array_equal(read_flo(path), flow)


def test_flo_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.flo"
    path.write_bytes(struct.pack("<f", 1234.5) + struct.pack("<II", 2, 2) + b"\x00" * 32)
    with pytest.raises(CodecError):
        read_flo(path)


def test_flo_rejects_truncation(tmp_path):
    path = tmp_path / "short.flo"
    path.write_bytes(struct.pack("<f", 202021.25) + struct.pack("<II", 4, 4) + b"\x00" * 8)
    with pytest.raises(CodecError):
        read_flo(path)


def test_flo_rejects_dimension_overflow(tmp_path):
    path = tmp_path / "huge.flo"
    path.write_bytes(struct.pack("<f", 202021.25) + struct.pack("<II", 1 << 30, 2))
    with pytest.raises(CodecError):
        read_flo(path)


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    rgb = rng.integers(0, 256, size=(5, 6, 3), dtype=np.uint8)
    path = tmp_path / "img.ppm"
    write_ppm(path, rgb)
    assert np.array_equal(read_ppm(path), rgb)


def test_ppm_handles_comments(tmp_path):
    path = tmp_path / "comment.ppm"
    path.write_bytes(b"P6\n# a comment\n2 1\n255\n" + bytes(range(6)))
    out = read_ppm(path)
    assert out.shape == (1, 2, 3)
    assert out.ravel().tolist() == list(range(6))


def test_ppm_rejects_wrong_maxval(tmp_path):
    path = tmp_path / "m.ppm"
    path.write_bytes(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00")
    with pytest.raises(CodecError):
        read_ppm(path)


def test_rgb_quantization_round_trip():
    rgb = np.array([[[0.0, 0.5, 1.0]]], dtype=np.float32)
    u8 = rgb_to_u8(rgb)
    assert u8.tolist() == [[[0, 128, 255]]]
    back = u8_to_rgb(u8)
    assert np.max(np.abs(back - rgb)) <= 0.5 / 255.0 + 1e-7


def test_ten1_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    arr = rng.normal(size=(3, 4, 5)).astype(np.float32)
    path = tmp_path / "t.ten1"
    write_ten1(path, arr)
    assert np.array_equal(read_ten1(path), arr)


def test_ten1_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ten1"
    path.write_bytes(b"NOPE" + struct.pack("<I", 1))
    with pytest.raises(CodecError):
        read_ten1(path)


def test_pyramid_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    levels = [rng.normal(size=(16 >> i, 16 >> i, 16 << i)).astype(np.float32)
              for i in range(4)]
    path = tmp_path / "p.ten1"
    write_pyramid(path, levels)
    out = read_pyramid(path)
    assert len(out) == 4
    for a, b in zip(levels, out):
        assert np.array_equal(a, b)


def test_pyramid_rejects_truncation(tmp_path):
    path = tmp_path / "trunc.ten1"
    path.write_bytes(struct.pack("<I", 2) + b"TEN1" + struct.pack("<I", 1)
                     + struct.pack("<I", 4) + b"\x00" * 16)
    with pytest.raises(CodecError):
        read_pyramid(path)
