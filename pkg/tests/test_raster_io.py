"""Lossless 8-bit grayscale load/save (PNG and binary PGM)."""

import numpy as np
import pytest
from PIL import Image

from conftest import synthetic_scan
from octaug.raster_io import RasterFormatError, load_image, save_image


def test_pgm_golden_example(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 100, 200, 255]))
    np.testing.assert_array_equal(load_image(p), [[0, 100], [200, 255]])


def test_pgm_header_comments_and_whitespace(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n# a comment\n 2\t2 # trailing\n255\n" + bytes(4))
    assert load_image(p).shape == (2, 2)


def test_pgm_round_trip(tmp_path):
    img = synthetic_scan(37, 23)
    p = tmp_path / "x.pgm"
    save_image(img, p)
    np.testing.assert_array_equal(load_image(p), img)


def test_png_round_trip_random_images(tmp_path):
    rng = np.random.default_rng(3)
    for i in range(100):
        h, w = rng.integers(2, 40, size=2)
        img = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
        p = tmp_path / f"r{i}.png"
        save_image(img, p)
        np.testing.assert_array_equal(load_image(p), img)


def test_full_resolution_round_trip(tmp_path, scan):
    p = tmp_path / "scan.png"
    save_image(scan, p)
    back = load_image(p)
    assert back.shape == (352, 496)
    np.testing.assert_array_equal(back, scan)


def test_save_then_load_sigma0_identity(tmp_path, small_scan):
    from octaug.warpfield import deform

    p = tmp_path / "a.png"
    save_image(small_scan, p)
    out = deform(load_image(p), 0.0, 5).image
    q = tmp_path / "b.png"
    save_image(out, q)
    np.testing.assert_array_equal(load_image(q), small_scan)


@pytest.mark.parametrize(
    "payload",
    [
        b"P6\n2 2\n255\n" + bytes(12),          # wrong magic (color PPM)
        b"P5\n2 2\n65535\n" + bytes(8),          # 16-bit maxval
        b"P5\n2 2\n255\n" + bytes(3),            # truncated pixels
        b"P5\n2\n255\n" + bytes(2),              # missing dimension
        b"garbage",
    ],
)
def test_malformed_pgm_rejected(tmp_path, payload):
    p = tmp_path / "bad.pgm"
    p.write_bytes(payload)
    with pytest.raises(RasterFormatError):
        load_image(p)


def test_color_png_rejected(tmp_path):
    p = tmp_path / "rgb.png"
    Image.new("RGB", (4, 4), (10, 20, 30)).save(p)
    with pytest.raises(RasterFormatError):
        load_image(p)


def test_16bit_png_rejected(tmp_path):
    p = tmp_path / "deep.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(p)
    with pytest.raises(RasterFormatError):
        load_image(p)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_image("/nonexistent/nope.png")


def test_save_into_missing_dir(tmp_path, small_scan):
    target = tmp_path / "no_such_dir" / "x.png"
    with pytest.raises(FileNotFoundError):
        save_image(small_scan, target)
    assert not target.exists()


def test_tiny_image_rejected(tmp_path):
    p = tmp_path / "one.png"
    Image.new("L", (1, 1), 5).save(p)
    with pytest.raises(ValueError):
        load_image(p)
