"""Seeded synthetic inputs: clustered 2-D points and an English-like text corpus."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from .kmeans import Box, corner_centers, format_point

DEFAULT_DOMAIN: Box = (0.0, 0.0, 1000.0, 1000.0)


@dataclass
class PointSet:
    points: np.ndarray
    true_centers: np.ndarray
    init_centers: np.ndarray
    domain: Box

    @property
    def box(self) -> Box:
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def lines(self) -> List[str]:
        return [format_point(x, y) for x, y in self.points.tolist()]

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text("\n".join(self.lines()) + "\n", encoding="utf-8")
        return path


def gen_points(
    n: int,
    k: int,
    seed: int,
    domain: Box = DEFAULT_DOMAIN,
    spread: float = 0.06,
    corner: float = 0.1,
    decimals: int = 3,
) -> PointSet:
    """``n`` points around ``k`` random true centers, all inside ``domain``.

    Each point is Gaussian around a uniformly chosen true center with
    standard deviation ``spread`` times the domain width, resampled until it
    falls inside the domain. The ``k`` initial centers are drawn from the
    bottom-left ``corner`` fraction of the domain.
    """
    if n < 1 or k < 1:
        raise ValueError("n and k must be >= 1")
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = domain
    w, h = x1 - x0, y1 - y0
    true = np.column_stack([rng.uniform(x0 + 0.1 * w, x1 - 0.1 * w, k), rng.uniform(y0 + 0.1 * h, y1 - 0.1 * h, k)])
    owner = rng.integers(0, k, n)
    pts = true[owner] + rng.normal(0.0, spread, (n, 2)) * [w, h]
    for _ in range(1000):
        bad = (pts[:, 0] < x0) | (pts[:, 0] > x1) | (pts[:, 1] < y0) | (pts[:, 1] > y1)
        if not bad.any():
            break
        pts[bad] = true[owner[bad]] + rng.normal(0.0, spread, (int(bad.sum()), 2)) * [w, h]
    pts = np.clip(np.round(pts, decimals), [x0, y0], [x1, y1])
    init = corner_centers(domain, k, rng, corner, decimals)
    return PointSet(pts, true, init, domain)


# -- text corpus ------------------------------------------------------------------

_ONSETS = ["", "b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "w", "br", "ch", "cl", "dr", "gr", "pl", "sh", "st", "th", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "ee", "io", "ou"]
_CODAS = ["", "", "n", "r", "s", "t", "l", "m", "nd", "ng", "st", "rk", "ck"]
_EXTRAS = ["café", "naïve", "über", "façade", "rôle", "x86", "covid19", "don't", "e-mail", "o'clock"]


def _vocabulary(rng: np.random.Generator, size: int) -> List[str]:
    words, seen = [], set()
    while len(words) < size:
        n_syl = int(rng.choice([1, 1, 2, 2, 2, 3, 3, 4]))
        w = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] + _CODAS[rng.integers(len(_CODAS))]
            for _ in range(n_syl)
        )
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def gen_corpus(size_bytes: int, seed: int = 0, vocab_size: int = 12000, line_width: int = 72) -> str:
    """Deterministic English-like text: Zipf-distributed pseudo-words, sentences, paragraphs."""
    rng = np.random.default_rng(seed)
    vocab = _vocabulary(rng, vocab_size) + _EXTRAS
    ranks = np.arange(1, len(vocab) + 1)
    p = 1.0 / ranks**1.07
    p /= p.sum()
    lines: List[str] = []
    line = ""
    total = 0
    batch = rng.choice(len(vocab), size=4096, p=p)
    bi = 0
    sentence_left = 0
    while total < size_bytes:
        if bi == len(batch):
            batch = rng.choice(len(vocab), size=4096, p=p)
            bi = 0
        word = vocab[batch[bi]]
        bi += 1
        if sentence_left == 0:
            word = word[:1].upper() + word[1:]
            sentence_left = int(rng.integers(4, 18))
        sentence_left -= 1
        if sentence_left == 0:
            word += "." if rng.random() < 0.8 else rng.choice(["!", "?", ";"])
        elif rng.random() < 0.07:
            word += ","
        if line and len(line) + 1 + len(word) > line_width:
            lines.append(line)
            total += len(line.encode("utf-8")) + 1
            line = ""
            if rng.random() < 0.05:
                lines.append("")
                total += 1
        line = f"{line} {word}" if line else word
    if line:
        lines.append(line)
    return "\n".join(lines) + "\n"
