import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image as PILImage

from conftest import random_image
from oracles import direct_convolve
from rainbench.errors import CorruptData, InvalidSigma, UnsupportedFormat
from rainbench.imaging import (IDENTITY_KERNEL, Image, Kernel, convolve_separable,
                               gaussian_kernel, load_image, save_image, to_luma)


def test_load_p6_all_red(tmp_path):
    p = tmp_path / "red.ppm"
    p.write_bytes(b"P6\n2 2\n255\n" + bytes([255, 0, 0]) * 4)
    img = load_image(p)
    assert (img.width, img.height, img.channels) == (2, 2, 3)
    assert img.tobytes() == bytes([255, 0, 0]) * 4


def test_load_p5_single_sample(tmp_path):
    p = tmp_path / "one.pgm"
    p.write_bytes(b"P5 1 1 255\n\x80")
    img = load_image(p)
    assert img.shape == (1, 1, 1)
    assert int(img.pixels[0, 0, 0]) == 128


def test_pnm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n# max\n255\n\x01\x02")
    assert load_image(p).tobytes() == b"\x01\x02"


@pytest.mark.parametrize("payload, exc", [
    (b"P6\n2 2\n65535\n" + b"\0" * 24, UnsupportedFormat),
    (b"P6\n2 2\n255\n" + b"\0" * 5, CorruptData),
    (b"P3\n1 1\n255\n0 0 0\n", UnsupportedFormat),
    (b"P5\nx 1\n255\n\0", CorruptData),
])
def test_bad_pnm(tmp_path, payload, exc):
    p = tmp_path / "bad.ppm"
    p.write_bytes(payload)
    with pytest.raises(exc):
        load_image(p)


def test_png_alpha_rejected(tmp_path):
    p = tmp_path / "a.png"
    PILImage.new("RGBA", (2, 2), (1, 2, 3, 4)).save(p)
    with pytest.raises(UnsupportedFormat):
        load_image(p)


@pytest.mark.parametrize("mode", ["P", "I;16", "LA"])
def test_png_other_modes_rejected(tmp_path, mode):
    p = tmp_path / "m.png"
    PILImage.new(mode, (3, 2)).save(p)
    with pytest.raises(UnsupportedFormat):
        load_image(p)


def test_truncated_png(tmp_path, rng):
    good = tmp_path / "g.png"
    save_image(random_image(rng, 20, 20), good)
    bad = tmp_path / "t.png"
    bad.write_bytes(good.read_bytes()[:60])
    with pytest.raises(CorruptData):
        load_image(bad)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "nope.png")


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
@pytest.mark.parametrize("channels", [1, 3])
def test_round_trip(tmp_path, rng, suffix, channels):
    img = random_image(rng, 7, 11, channels)
    p = tmp_path / f"x{suffix}"
    save_image(img, p)
    assert load_image(p) == img


def test_rgb_as_pgm_rejected(tmp_path, rng):
    with pytest.raises(UnsupportedFormat):
        save_image(random_image(rng, 2, 2, 3), tmp_path / "x.pgm")
    with pytest.raises(UnsupportedFormat):
        save_image(random_image(rng, 2, 2, 3), tmp_path / "x.bin", format="PGM")


def test_large_png_decodes_with_pillow(tmp_path, rng):
    img = random_image(rng, 600, 800)
    p = tmp_path / "big.png"
    save_image(img, p)
    with PILImage.open(p) as im:
        assert im.size == (800, 600) and im.mode == "RGB"
        assert np.array_equal(np.asarray(im), img.pixels)


def test_image_invariants():
    with pytest.raises(UnsupportedFormat):
        Image(np.zeros((2, 2, 4), np.uint8))
    with pytest.raises(UnsupportedFormat):
        Image(np.zeros((2, 2), np.uint16))
    img = Image(np.zeros((2, 3), np.uint8))
    assert img.shape == (2, 3, 1)
    assert img.pixels.size == img.width * img.height * img.channels
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1


@pytest.mark.parametrize("rgb, expected", [((255, 255, 255), 255), ((255, 0, 0), 76), ((0, 0, 0), 0),
                                           ((0, 255, 0), 150), ((0, 0, 255), 29)])
def test_to_luma(rgb, expected):
    # 0.587*255 = 149.685 -> 150, 0.114*255 = 29.07 -> 29
    img = Image(np.array([[rgb]], dtype=np.uint8))
    assert int(to_luma(img).pixels[0, 0, 0]) == expected


def test_to_luma_passthrough():
    img = Image(np.array([[7]], dtype=np.uint8))
    assert to_luma(img) is img


@pytest.mark.parametrize("sigma", [0.5, 1.5, 3.0])
def test_kernel_normalized_symmetric(sigma):
    k = gaussian_kernel(sigma)
    assert len(k.weights) == 2 * k.radius + 1
    assert abs(math.fsum(k.weights) - 1.0) <= 1e-12
    assert k.weights == tuple(reversed(k.weights))


def test_kernel_shape():
    k = gaussian_kernel(1.5)
    assert k.radius == 5
    assert k.weights[5] == max(k.weights)
    k1 = gaussian_kernel(1.0)
    assert k1.weights[k1.radius] / k1.weights[k1.radius + 1] == pytest.approx(math.exp(0.5), rel=1e-12)


@pytest.mark.parametrize("sigma", [0, -1, float("nan"), float("inf")])
def test_kernel_bad_sigma(sigma):
    with pytest.raises(InvalidSigma):
        gaussian_kernel(sigma)


def test_identity_kernel(rng):
    img = random_image(rng, 9, 13)
    assert convolve_separable(img, IDENTITY_KERNEL) == img


def test_constant_image_preserved():
    img = Image(np.full((10, 12, 3), 173, np.uint8))
    for s in (0.5, 1.5, 4.0):
        assert convolve_separable(img, gaussian_kernel(s)) == img


def test_hand_convolution_mirror_edges():
    # mirror edges: left neighbour of index 0 is index 1
    img = Image(np.array([[0, 255, 0]], dtype=np.uint8))
    out = convolve_separable(img, Kernel(1, (0.25, 0.5, 0.25)))
    # the vertical pass on a single row sees the same sample three times
    oracle = np.floor(direct_convolve(img.pixels[:, :, 0], [0.25, 0.5, 0.25]) + 0.5)
    assert out.pixels[:, :, 0].tolist() == [[128, 128, 128]]
    assert oracle.tolist() == [[128, 128, 128]]


@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 16), w=st.integers(1, 16), sigma=st.floats(0.3, 3.0), seed=st.integers(0, 2**32 - 1))
def test_separable_matches_direct(h, w, sigma, seed):
    rng = np.random.default_rng(seed)
    plane = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
    k = gaussian_kernel(sigma)
    got = convolve_separable(Image(plane), k).pixels[:, :, 0].astype(int)
    want = np.clip(np.floor(direct_convolve(plane, k.weights) + 0.5), 0, 255).astype(int)
    assert np.max(np.abs(got - want)) <= 1
