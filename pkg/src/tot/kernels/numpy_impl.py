"""Pure-numpy kernel implementations.

Fallback path used when numba is unavailable or TOT_KERNELS=numpy.  Each
function mirrors the arithmetic order of its jitted twin: accumulations run
left-to-right over the same index order, so results agree bit-for-bit where
the contract demands exactness (pooling, blur, resize).
"""

from __future__ import annotations

import numpy as np


def convolve_separable(img: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Separable 2D convolution with clamp-to-edge padding.

    img: (H, W, C) float64. weights: (2r+1,) float64, applied first along
    x then along y. Accumulates taps in ascending order.
    """
    radius = (len(weights) - 1) // 2
    h, w, _ = img.shape
    padded = np.pad(img, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    horiz = np.zeros_like(img)
    for t in range(len(weights)):
        horiz += weights[t] * padded[:, t : t + w, :]
    padded = np.pad(horiz, ((radius, radius), (0, 0), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for t in range(len(weights)):
        out += weights[t] * padded[t : t + h, :, :]
    return out


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers, coords clamped to edges.

    img: (H, W, C) float64 -> (out_h, out_w, C) float64.
    """
    h, w, c = img.shape
    scale_y = h / out_h
    scale_x = w / out_w
    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * scale_y - 0.5
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * scale_x - 0.5
    sy = np.clip(sy, 0.0, h - 1.0)
    sx = np.clip(sx, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    p00 = img[y0[:, None], x0[None, :], :]
    p01 = img[y0[:, None], x1[None, :], :]
    p10 = img[y1[:, None], x0[None, :], :]
    p11 = img[y1[:, None], x1[None, :], :]
    top = p00 + fx * (p01 - p00)
    bot = p10 + fx * (p11 - p10)
    return top + fy * (bot - top)


def pool_cells(fm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum each of the 9 floor-partitioned grid cells per channel.

    fm: (n, H, W) float64. Returns (sums (9, n) float64, counts (9,) int64),
    cells in row-major order. Sums accumulate row-major within each cell.
    """
    n, h, w = fm.shape
    sums = np.zeros((9, n), dtype=np.float64)
    counts = np.zeros(9, dtype=np.int64)
    for r in range(3):
        y0, y1 = (r * h) // 3, ((r + 1) * h) // 3
        for c in range(3):
            x0, x1 = (c * w) // 3, ((c + 1) * w) // 3
            cell = r * 3 + c
            counts[cell] = (y1 - y0) * (x1 - x0)
            if counts[cell] == 0:
                continue
            block = fm[:, y0:y1, x0:x1].reshape(n, -1)
            # cumsum is a strict left-to-right scan, matching the jitted loop
            sums[cell] = np.cumsum(block, axis=1)[:, -1]
    return sums, counts


def assign_nearest(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per point under squared Euclidean distance.

    Ties go to the lowest centroid index.  Returns (labels int64, sqdist
    float64).  Chunked to bound the (chunk, k) distance matrix.
    """
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    sqd = np.empty(n, dtype=np.float64)
    chunk = max(1, min(n, 8_388_608 // max(1, centroids.shape[0])))
    for start in range(0, n, chunk):
        block = points[start : start + chunk]
        d2 = ((block[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        idx = np.argmin(d2, axis=1)
        labels[start : start + chunk] = idx
        sqd[start : start + chunk] = d2[np.arange(len(block)), idx]
    return labels, sqd


def centroid_sums(points: np.ndarray, labels: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster coordinate sums and member counts."""
    d = points.shape[1]
    sums = np.zeros((k, d), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    np.add.at(sums, labels, points)
    np.add.at(counts, labels, 1)
    return sums, counts
