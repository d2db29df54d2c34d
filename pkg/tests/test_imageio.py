import numpy as np
import pytest
from PIL import Image

from diffrestore.imageio import read_pfm, tonemap, write_pfm, write_png


def test_pfm_round_trip_and_layout(tmp_path):
    img = np.random.default_rng(0).random((3, 5, 3)).astype(np.float32).astype(np.float64)
    write_pfm(tmp_path / "a.pfm", img)
    raw = open(tmp_path / "a.pfm", "rb").read()
    assert raw.startswith(b"PF\n5 3\n-1.0\n")
    # first stored row is the bottom image row
    first = np.frombuffer(raw[len(b"PF\n5 3\n-1.0\n"):], "<f4", count=15).reshape(5, 3)
    np.testing.assert_array_equal(first, img[-1])
    np.testing.assert_array_equal(read_pfm(tmp_path / "a.pfm"), img)


def test_pfm_rejects_bad_shape(tmp_path):
    with pytest.raises(ValueError):
        write_pfm(tmp_path / "b.pfm", np.zeros((2, 2)))
    (tmp_path / "c.pfm").write_bytes(b"P6\n1 1\n255\n")
    with pytest.raises(ValueError):
        read_pfm(tmp_path / "c.pfm")


def test_tonemap_exposure_then_gamma():
    out = tonemap(np.array([0.0, 0.25, 1.0, 4.0]), exposure=2.0)
    np.testing.assert_array_equal(out, [0, round(255 * 0.5 ** (1 / 2.2)), 255, 255])


def test_png_written(tmp_path):
    write_png(tmp_path / "a.png", np.ones((4, 6, 3)) * 0.5)
    img = np.asarray(Image.open(tmp_path / "a.png"))
    assert img.shape == (4, 6, 3) and np.all(img == round(255 * 0.5 ** (1 / 2.2)))
