"""Numeric hot loops for the sequential k-means reference.

Each kernel has a numba ``@njit`` version and a pure-numpy fallback with
identical results (same tie-breaking, same summation order). Set
``SEALMR_DISABLE_NUMBA=1`` to force the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("SEALMR_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("disabled by SEALMR_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

CHUNK = 8192


def assign_accumulate_numpy(points: np.ndarray, centers: np.ndarray):
    """Nearest center per point (lowest index on ties), per-center coordinate sums and counts."""
    n, k = len(points), len(centers)
    labels = np.empty(n, dtype=np.int64)
    for lo in range(0, n, CHUNK):
        p = points[lo : lo + CHUNK]
        dx = p[:, 0:1] - centers[None, :, 0]
        dy = p[:, 1:2] - centers[None, :, 1]
        d = dx * dx + dy * dy
        labels[lo : lo + CHUNK] = np.argmin(d, axis=1)
    sums = np.zeros((k, 2))
    # unbuffered, applied in index order: sequential summation per center
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return labels, sums, counts


if HAVE_NUMBA:

    @njit(cache=True)
    def _assign_accumulate_jit(points, centers):
        n = points.shape[0]
        k = centers.shape[0]
        labels = np.empty(n, dtype=np.int64)
        sums = np.zeros((k, 2))
        counts = np.zeros(k, dtype=np.int64)
        for i in range(n):
            x = points[i, 0]
            y = points[i, 1]
            best = 0
            bestd = np.inf
            for j in range(k):
                dx = x - centers[j, 0]
                dy = y - centers[j, 1]
                d = dx * dx + dy * dy
                if d < bestd:
                    bestd = d
                    best = j
            labels[i] = best
            sums[best, 0] += x
            sums[best, 1] += y
            counts[best] += 1
        return labels, sums, counts

    def assign_accumulate_numba(points: np.ndarray, centers: np.ndarray):
        return _assign_accumulate_jit(np.ascontiguousarray(points, dtype=np.float64), np.ascontiguousarray(centers, dtype=np.float64))

    assign_accumulate = assign_accumulate_numba
else:
    assign_accumulate_numba = None
    assign_accumulate = assign_accumulate_numpy


def backend() -> str:
    return "numba" if assign_accumulate is not assign_accumulate_numpy else "numpy"
