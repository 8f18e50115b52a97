"""Numba-jitted kernel implementations (default path).

Loop orders match numpy_impl exactly; see that module's docstring.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def convolve_separable(img, weights):
    h, w, c = img.shape
    radius = (len(weights) - 1) // 2
    horiz = np.zeros((h, w, c), dtype=np.float64)
    for t in range(len(weights)):
        off = t - radius
        for y in range(h):
            for x in range(w):
                xs = min(max(x + off, 0), w - 1)
                for ch in range(c):
                    horiz[y, x, ch] += weights[t] * img[y, xs, ch]
    out = np.zeros((h, w, c), dtype=np.float64)
    for t in range(len(weights)):
        off = t - radius
        for y in range(h):
            ys = min(max(y + off, 0), h - 1)
            for x in range(w):
                for ch in range(c):
                    out[y, x, ch] += weights[t] * horiz[ys, x, ch]
    return out


@njit(cache=True)
def resize_bilinear(img, out_h, out_w):
    h, w, c = img.shape
    scale_y = h / out_h
    scale_x = w / out_w
    out = np.empty((out_h, out_w, c), dtype=np.float64)
    for y in range(out_h):
        sy = (y + 0.5) * scale_y - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > h - 1.0:
            sy = h - 1.0
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for x in range(out_w):
            sx = (x + 0.5) * scale_x - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > w - 1.0:
                sx = w - 1.0
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            for ch in range(c):
                p00 = img[y0, x0, ch]
                p01 = img[y0, x1, ch]
                p10 = img[y1, x0, ch]
                p11 = img[y1, x1, ch]
                top = p00 + fx * (p01 - p00)
                bot = p10 + fx * (p11 - p10)
                out[y, x, ch] = top + fy * (bot - top)
    return out


@njit(cache=True)
def pool_cells(fm):
    n, h, w = fm.shape
    sums = np.zeros((9, n), dtype=np.float64)
    counts = np.zeros(9, dtype=np.int64)
    for r in range(3):
        y0 = (r * h) // 3
        y1 = ((r + 1) * h) // 3
        for c in range(3):
            x0 = (c * w) // 3
            x1 = ((c + 1) * w) // 3
            cell = r * 3 + c
            counts[cell] = (y1 - y0) * (x1 - x0)
            for ch in range(n):
                acc = 0.0
                for y in range(y0, y1):
                    for x in range(x0, x1):
                        acc += fm[ch, y, x]
                sums[cell, ch] = acc
    return sums, counts


@njit(cache=True)
def assign_nearest(points, centroids):
    n, d = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    sqd = np.empty(n, dtype=np.float64)
    for i in range(n):
        best = 0
        best_d = np.inf
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = points[i, t] - centroids[j, t]
                acc += diff * diff
            if acc < best_d:
                best_d = acc
                best = j
        labels[i] = best
        sqd[i] = best_d
    return labels, sqd


@njit(cache=True)
def centroid_sums(points, labels, k):
    n, d = points.shape
    sums = np.zeros((k, d), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        lab = labels[i]
        counts[lab] += 1
        for t in range(d):
            sums[lab, t] += points[i, t]
    return sums, counts
