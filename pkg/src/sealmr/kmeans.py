"""k-means helpers shared by the client loop, plus the sequential reference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from . import kernels

Box = Tuple[float, float, float, float]  # xmin, ymin, xmax, ymax


def format_point(x: float, y: float) -> str:
    # repr is the shortest text that parses back to the same double
    return f"{float(x)!r},{float(y)!r}"


def as_lines(points) -> List[str]:
    if isinstance(points, np.ndarray):
        return [format_point(x, y) for x, y in points.tolist()]
    out = []
    for p in points:
        out.append(p.strip() if isinstance(p, str) else format_point(p[0], p[1]))
    return out


def parse_lines(lines: Sequence[str]) -> np.ndarray:
    pts = np.empty((len(lines), 2))
    for i, line in enumerate(lines):
        xs, ys = line.split(",")
        pts[i, 0] = float(xs)
        pts[i, 1] = float(ys)
    return pts


def read_points(path) -> np.ndarray:
    with open(path, encoding="utf-8") as f:
        return parse_lines([ln for ln in (l.strip() for l in f) if ln])


def bounding_box(points: np.ndarray) -> Box:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def diagonal(box: Box) -> float:
    return math.hypot(box[2] - box[0], box[3] - box[1])


def corner_centers(box: Box, k: int, rng, corner: float = 0.1, decimals: int = 3) -> np.ndarray:
    """``k`` starting centers drawn uniformly from the bottom-left ``corner`` fraction of ``box``."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    x0, y0, x1, y1 = box
    xs = rng.uniform(x0, x0 + corner * (x1 - x0), k)
    ys = rng.uniform(y0, y0 + corner * (y1 - y0), k)
    return np.round(np.column_stack([xs, ys]), decimals)


def next_centers(old: Sequence[Sequence[float]], results: Mapping[str, Sequence[float]]) -> List[List[float]]:
    """New centers from reducer output; a center with no assigned points stays where it was."""
    out = []
    for i, c in enumerate(old):
        r = results.get(str(i))
        out.append([float(r[0]), float(r[1])] if r is not None else [float(c[0]), float(c[1])])
    return out


def mean_shift(old, new) -> float:
    return sum(math.hypot(a[0] - b[0], a[1] - b[1]) for a, b in zip(old, new)) / len(old)


def should_stop(shift: float, threshold: float) -> bool:
    # a zero threshold means "run to the fixed point"
    return shift < threshold or shift == 0.0


@dataclass
class ReferenceRun:
    centers: np.ndarray
    iterations: int
    history: List[np.ndarray]
    shifts: List[float]
    threshold: float


def reference_kmeans(points: np.ndarray, init_centers, threshold_fraction: float = 1e-3, max_iterations: int = 500) -> ReferenceRun:
    """Single-process Lloyd iterations with the distributed run's rules.

    Nearest center by squared distance, lowest index on ties; an empty
    cluster keeps its center; stop when the mean center displacement is
    below ``threshold_fraction`` times the bounding-box diagonal (or is
    exactly zero).
    """
    points = np.asarray(points, dtype=np.float64)
    centers = np.array(init_centers, dtype=np.float64)
    lo, hi = points.min(axis=0), points.max(axis=0)
    threshold = threshold_fraction * float(np.sqrt(((hi - lo) ** 2).sum()))
    history = [centers.copy()]
    shifts = []
    for _ in range(max_iterations):
        _, sums, counts = kernels.assign_accumulate(points, centers)
        new = centers.copy()
        nz = counts > 0
        new[nz] = sums[nz] / counts[nz, None]
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).mean())
        shifts.append(shift)
        history.append(new.copy())
        centers = new
        if shift < threshold or shift == 0.0:
            break
    return ReferenceRun(centers, len(history) - 1, history, shifts, threshold)
