import math

import numpy as np
import pytest
from PIL import Image

from tot.domain import Box
from tot.errors import InvalidBox, UnsupportedImage
from tot.preprocess import (
    blur_kernel,
    crop_resize,
    expand_roi,
    gaussian_blur,
    read_png,
    write_png,
)


def bilinear_oracle(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Direct per-pixel bilinear formula with half-pixel centers."""
    h, w, c = img.shape
    out = np.empty((out_h, out_w, c))
    for y in range(out_h):
        sy = min(max((y + 0.5) * (h / out_h) - 0.5, 0.0), h - 1.0)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for x in range(out_w):
            sx = min(max((x + 0.5) * (w / out_w) - 0.5, 0.0), w - 1.0)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            for ch in range(c):
                top = img[y0, x0, ch] + fx * (img[y0, x1, ch] - img[y0, x0, ch])
                bot = img[y1, x0, ch] + fx * (img[y1, x1, ch] - img[y1, x0, ch])
                out[y, x, ch] = top + fy * (bot - top)
    return out


def kernel_oracle(sigma: float) -> np.ndarray:
    """1D discrete Gaussian taps by the direct formula."""
    radius = math.ceil(3.0 * sigma)
    taps = np.array(
        [math.exp(-(i * i) / (2.0 * sigma * sigma)) for i in range(-radius, radius + 1)]
    )
    return taps / taps.sum()


class TestExpandRoi:
    def test_reference_case(self):
        out = expand_roi(Box(10, 10, 50, 50), 5, (224, 224))
        assert [b.as_tuple() for b in out.boxes] == [
            (10, 10, 50, 50),
            (5, 5, 55, 55),
            (0, 0, 60, 60),
        ]

    def test_delta_zero_identity(self):
        out = expand_roi(Box(3, 4, 8, 9), 0, (20, 20))
        assert len({b.as_tuple() for b in out.boxes}) == 1

    def test_clamped_at_border(self):
        out = expand_roi(Box(2, 2, 30, 30), 5, (224, 224))
        assert out.boxes[2].as_tuple() == (0, 0, 40, 40)

    def test_roi_outside_image_rejected(self):
        with pytest.raises(InvalidBox):
            expand_roi(Box(0, 0, 300, 10), 5, (224, 224))

    def test_containment_randomized(self, rng):
        for _ in range(1000):
            width = int(rng.integers(2, 300))
            height = int(rng.integers(2, 300))
            x1 = int(rng.integers(0, width - 1))
            y1 = int(rng.integers(0, height - 1))
            x2 = int(rng.integers(x1 + 1, width + 1))
            y2 = int(rng.integers(y1 + 1, height + 1))
            delta = int(rng.integers(0, 30))
            out = expand_roi(Box(x1, y1, x2, y2), delta, (width, height))
            b1, b2, b3 = out.boxes
            assert b2.contains(b1) and b3.contains(b2)
            for b in out.boxes:
                assert 0 <= b.x1 < b.x2 <= width
                assert 0 <= b.y1 < b.y2 <= height


class TestCropResize:
    def test_full_image_identity(self, rng):
        img = rng.integers(0, 256, (17, 23, 3)).astype(np.uint8)
        out = crop_resize(img, Box(0, 0, 23, 17), (23, 17))
        assert np.array_equal(out, img)

    def test_checkerboard_matches_bilinear_oracle(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        img[0, 1] = img[1, 0] = 255
        out = crop_resize(img, Box(0, 0, 2, 2), (4, 4))
        expected = np.clip(np.rint(bilinear_oracle(img.astype(float), 4, 4)), 0, 255)
        assert np.array_equal(out, expected.astype(np.uint8))

    def test_random_crops_match_oracle(self, rng):
        img = rng.integers(0, 256, (31, 29, 3)).astype(np.uint8)
        for _ in range(10):
            x1, y1 = int(rng.integers(0, 20)), int(rng.integers(0, 20))
            box = Box(x1, y1, x1 + int(rng.integers(2, 9)), y1 + int(rng.integers(2, 9)))
            tw, th = int(rng.integers(1, 12)), int(rng.integers(1, 12))
            out = crop_resize(img, box, (tw, th))
            crop = img[box.y1 : box.y2, box.x1 : box.x2].astype(float)
            expected = np.clip(np.rint(bilinear_oracle(crop, th, tw)), 0, 255)
            assert np.array_equal(out, expected.astype(np.uint8))

    def test_single_pixel_box_goes_constant(self):
        img = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3)
        out = crop_resize(img, Box(2, 1, 3, 2), (224, 224))
        assert out.shape == (224, 224, 3)
        assert np.all(out == img[1, 2])

    def test_degenerate_box_rejected(self, rng):
        img = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
        with pytest.raises(InvalidBox):
            crop_resize(img, Box(0, 0, 9, 8), (4, 4))


class TestGaussianBlur:
    def test_sigma_zero_bit_identical(self, rng):
        img = rng.integers(0, 256, (16, 16, 3)).astype(np.uint8)
        out = gaussian_blur(img, 0.0)
        assert np.array_equal(out, img)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 1.7, 2.5])
    def test_constant_image_preserved(self, sigma):
        img = np.full((20, 20, 3), 128, dtype=np.uint8)
        assert np.array_equal(gaussian_blur(img, sigma), img)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5, 2.0, 2.5])
    def test_kernel_normalized(self, sigma):
        kern = blur_kernel(sigma)
        assert kern.radius == math.ceil(3 * sigma)
        assert abs(kern.weights.sum() - 1.0) < 1e-6
        assert abs(kern.taps.sum() - 1.0) < 1e-6
        # symmetric under horizontal and vertical flip
        assert np.array_equal(kern.weights, kern.weights[::-1, :])
        assert np.array_equal(kern.weights, kern.weights[:, ::-1])

    def test_single_bright_pixel_center_weight(self):
        sigma = 1.0
        img = np.zeros((15, 15, 3), dtype=np.uint8)
        img[7, 7] = 200
        out = gaussian_blur(img, sigma)
        taps = kernel_oracle(sigma)
        center = taps[len(taps) // 2] ** 2  # 2D kernel center = tap^2
        assert out[7, 7, 0] == round(200 * center)

    def test_blur_matches_dense_2d_oracle(self, rng):
        # separable passes must equal the full 2D convolution
        sigma = 0.8
        img = rng.integers(0, 256, (9, 9, 3)).astype(np.uint8)
        taps = kernel_oracle(sigma)
        radius = len(taps) // 2
        kern2d = np.outer(taps, taps)
        h, w, _ = img.shape
        expected = np.zeros((h, w, 3))
        for y in range(h):
            for x in range(w):
                for dy in range(-radius, radius + 1):
                    for dx in range(-radius, radius + 1):
                        ys = min(max(y + dy, 0), h - 1)
                        xs = min(max(x + dx, 0), w - 1)
                        expected[y, x] += kern2d[dy + radius, dx + radius] * img[ys, xs]
        out = gaussian_blur(img, sigma)
        assert np.abs(out.astype(float) - np.clip(np.rint(expected), 0, 255)).max() <= 1


class TestPngIo:
    def test_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, (10, 12, 3)).astype(np.uint8)
        path = tmp_path / "img.png"
        write_png(img, path)
        assert np.array_equal(read_png(path), img)

    def test_rejects_grayscale(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(path)
        with pytest.raises(UnsupportedImage):
            read_png(path)

    def test_rejects_16bit(self, tmp_path):
        path = tmp_path / "deep.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(path)
        with pytest.raises(UnsupportedImage):
            read_png(path)
