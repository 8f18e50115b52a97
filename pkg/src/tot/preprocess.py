"""ROI geometry, crop/resize, and Gaussian blur.

Images are (H, W, 3) uint8 RGB numpy arrays throughout.  Blur and resize
accumulate in float64 and round once at the end, so a sigma=0 blur and a
full-frame same-size crop are bit-identical to their inputs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import kernels
from .domain import Box
from .errors import InvalidBox, UnsupportedImage


@dataclass(frozen=True)
class ExpandedBoxes:
    """The ROI box and its delta- and 2*delta-expanded variants, clamped."""

    boxes: tuple[Box, Box, Box]
    delta: int


@dataclass(frozen=True)
class BlurKernel:
    """Discrete truncated Gaussian: radius = ceil(3*sigma), weights sum to 1."""

    sigma: float
    radius: int
    weights: np.ndarray  # (2r+1, 2r+1), outer product of the 1D taps

    @property
    def taps(self) -> np.ndarray:
        """The 1D separable taps, length 2*radius + 1."""
        return self._taps

    def __post_init__(self):
        object.__setattr__(self, "_taps", _gaussian_taps(self.sigma, self.radius))


def _gaussian_taps(sigma: float, radius: int) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return w / w.sum()


def blur_kernel(sigma: float) -> BlurKernel:
    """Build the discrete kernel for sigma > 0."""
    if sigma <= 0:
        raise ValueError("blur_kernel requires sigma > 0; sigma=0 is identity")
    radius = math.ceil(3.0 * sigma)
    taps = _gaussian_taps(sigma, radius)
    return BlurKernel(sigma=sigma, radius=radius, weights=np.outer(taps, taps))


def validate_image(image: np.ndarray) -> np.ndarray:
    if (
        not isinstance(image, np.ndarray)
        or image.ndim != 3
        or image.shape[2] != 3
        or image.dtype != np.uint8
    ):
        raise UnsupportedImage(
            f"expected (H, W, 3) uint8 RGB array, got "
            f"{getattr(image, 'shape', None)} {getattr(image, 'dtype', None)}"
        )
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise UnsupportedImage("image must be at least 1x1")
    return image


def _clamp_box(x1: int, y1: int, x2: int, y2: int, width: int, height: int) -> Box:
    return Box(
        x1=max(0, min(x1, width)),
        y1=max(0, min(y1, height)),
        x2=max(0, min(x2, width)),
        y2=max(0, min(y2, height)),
    )


def expand_roi(roi: Box, delta: int, image_dims: tuple[int, int]) -> ExpandedBoxes:
    """Produce the ROI box plus its delta- and 2*delta-expanded variants.

    Expanded boxes are intersected with the image rectangle.  The result
    satisfies box1 within box2 within box3.
    """
    width, height = image_dims
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if roi.x1 < 0 or roi.y1 < 0 or roi.x2 > width or roi.y2 > height:
        raise InvalidBox(f"roi {roi.as_tuple()} exceeds image {width}x{height}")
    boxes = (
        roi,
        _clamp_box(roi.x1 - delta, roi.y1 - delta, roi.x2 + delta, roi.y2 + delta, width, height),
        _clamp_box(
            roi.x1 - 2 * delta, roi.y1 - 2 * delta, roi.x2 + 2 * delta, roi.y2 + 2 * delta, width, height
        ),
    )
    return ExpandedBoxes(boxes=boxes, delta=delta)


def crop_resize(image: np.ndarray, box: Box, target: tuple[int, int]) -> np.ndarray:
    """Crop a box (exclusive right/bottom) and resize to target (width, height).

    Bilinear resampling with half-pixel centers.  A full-frame crop at the
    image's own size is the identity.
    """
    validate_image(image)
    height, width = image.shape[:2]
    tw, th = target
    if tw < 1 or th < 1:
        raise ValueError("target dims must be >= 1")
    if not (0 <= box.x1 < box.x2 <= width and 0 <= box.y1 < box.y2 <= height):
        raise InvalidBox(f"box {box.as_tuple()} not within image {width}x{height}")
    crop = image[box.y1 : box.y2, box.x1 : box.x2, :]
    if crop.shape[0] == th and crop.shape[1] == tw:
        return crop.copy()
    out = kernels.resize_bilinear(crop.astype(np.float64), th, tw)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur with clamp-to-edge padding; sigma=0 returns the input bits."""
    validate_image(image)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return image.copy()
    kern = blur_kernel(sigma)
    out = kernels.convolve_separable(image.astype(np.float64), kern.taps)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def read_png(path: str | os.PathLike) -> np.ndarray:
    """Decode a PNG; rejects anything that is not 8-bit RGB."""
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise UnsupportedImage(
                f"{path}: expected 8-bit RGB, got mode {img.mode!r}"
            )
        arr = np.asarray(img, dtype=np.uint8)
    return validate_image(arr)


def write_png(image: np.ndarray, path: str | os.PathLike) -> None:
    validate_image(image)
    Image.fromarray(image, mode="RGB").save(path, format="PNG")
