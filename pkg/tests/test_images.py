import numpy as np
import pytest
from PIL import Image

from adists.images import decode_image, encode_gray, encode_image


def test_encode_decode_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    # quantize first so the round trip is exact
    x = np.rint(rng.random((3, 17, 23)) * 255.0) / 255.0
    p = tmp_path / "x.png"
    encode_image(x, p)
    y = decode_image(p)
    assert y.shape == (3, 17, 23)
    assert y.dtype == np.float64
    assert np.max(np.abs(y - x)) < 1e-12


def test_encode_quantizes_to_nearest_level(tmp_path):
    x = np.full((3, 4, 4), 0.5)  # 127.5 -> rounds to 128 (banker's: even)
    p = tmp_path / "half.png"
    encode_image(x, p)
    y = decode_image(p)
    assert np.allclose(y, 128.0 / 255.0)


def test_decode_grayscale_replicates_channels(tmp_path):
    g = (np.arange(30).reshape(5, 6) * 8).astype(np.uint8)
    p = tmp_path / "g.png"
    Image.fromarray(g, mode="L").save(p)
    y = decode_image(p)
    assert y.shape == (3, 5, 6)
    assert np.array_equal(y[0], y[1]) and np.array_equal(y[1], y[2])
    assert np.max(np.abs(y[0] - g / 255.0)) < 1e-12


def test_decode_rgba_converts(tmp_path):
    rgba = np.zeros((4, 5, 4), dtype=np.uint8)
    rgba[..., 0] = 200
    rgba[..., 3] = 255
    p = tmp_path / "a.png"
    Image.fromarray(rgba, mode="RGBA").save(p)
    y = decode_image(p)
    assert y.shape == (3, 4, 5)
    assert abs(y[0, 0, 0] - 200 / 255.0) < 1e-12


def test_decode_rejects_non_png(tmp_path):
    p = tmp_path / "x.jpg"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(p, format="JPEG")
    with pytest.raises(ValueError, match="expected PNG"):
        decode_image(p)


def test_decode_rejects_garbage(tmp_path):
    p = tmp_path / "x.png"
    p.write_bytes(b"not an image at all")
    with pytest.raises(ValueError, match="cannot decode"):
        decode_image(p)


def test_decode_rejects_16bit(tmp_path):
    arr = (np.arange(16, dtype=np.uint16).reshape(4, 4)) * 4096
    p = tmp_path / "deep.png"
    Image.fromarray(arr).save(p)  # mode "I;16", 16-bit grayscale PNG
    with pytest.raises(ValueError, match="bit depth"):
        decode_image(p)


def test_encode_validates_input(tmp_path):
    with pytest.raises(ValueError):
        encode_image(np.zeros((1, 4, 4)), tmp_path / "bad.png")
    bad = np.zeros((3, 4, 4))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        encode_image(bad, tmp_path / "nan.png")


def test_encode_clips_out_of_range(tmp_path):
    x = np.full((3, 4, 4), 2.0)
    x[:, 0, 0] = -3.0
    p = tmp_path / "clip.png"
    encode_image(x, p)
    y = decode_image(p)
    assert y.max() == 1.0 and y.min() == 0.0


def test_encode_gray(tmp_path):
    m = np.linspace(0.0, 1.0, 24).reshape(4, 6)
    p = tmp_path / "m.png"
    encode_gray(m, p)
    y = decode_image(p)
    assert y.shape == (3, 4, 6)
    assert np.max(np.abs(y[0] - np.rint(m * 255.0) / 255.0)) < 1e-12
    with pytest.raises(ValueError):
        encode_gray(np.zeros((3, 4, 6)), tmp_path / "bad.png")
