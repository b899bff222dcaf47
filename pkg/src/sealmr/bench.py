"""Mode-matrix benchmark: per-iteration k-means timing and data volumes for each seal mode."""

from __future__ import annotations

import asyncio
import csv
import logging
import statistics
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cluster import LocalCluster, ProcessCluster
from .datagen import gen_points
from .region import SealMode, toggle

log = logging.getLogger(__name__)

DEFAULT_MODES = ("plain", "crypto-only", "sealed")
INIT_CHOICES = ("corner", "sample")


class ResultMismatch(RuntimeError):
    """A seal mode produced different job output than the plain baseline."""


@dataclass
class BenchConfig:
    n_points: int
    k_centers: int
    n_mappers: int = 2
    n_reducers: int = 2
    seal_modes: Sequence[str] = DEFAULT_MODES
    seed: int = 0
    repetitions: int = 1
    threshold_fraction: float = 1e-3
    max_iterations: Optional[int] = None
    backend: str = "process"  # or "inprocess"
    init: str = "corner"  # or "sample": k distinct input points

    def __post_init__(self):
        if self.n_points < 1 or self.k_centers < 1:
            raise ValueError("n_points and k_centers must be >= 1")
        if self.init not in INIT_CHOICES:
            raise ValueError(f"init must be one of {INIT_CHOICES}")
        if self.init == "sample" and self.k_centers > self.n_points:
            raise ValueError("sample init needs k_centers <= n_points")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.n_reducers > self.k_centers:
            log.info("more reducers (%d) than centers (%d); some reducers will be idle", self.n_reducers, self.k_centers)
        self.seal_modes = [toggle(m).value for m in self.seal_modes]


@dataclass
class MetricsRow:
    iteration: int
    wall_ms: float
    split_bytes: int
    shuffle_bytes: int
    output_bytes: int
    mode: str
    cache_proxy: float


COLUMNS = [f.name for f in fields(MetricsRow)]


@dataclass
class Cell:
    """All repetitions of one (mode, n, k) configuration."""

    mode: str
    n: int
    k: int
    runs: List[List[MetricsRow]] = field(default_factory=list)
    centers: List[List[List[float]]] = field(default_factory=list)
    iterations: List[int] = field(default_factory=list)

    def per_iteration_ms(self) -> List[float]:
        return [statistics.fmean(r.wall_ms for r in rows) for rows in self.runs]

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(self.per_iteration_ms())

    @property
    def cv(self) -> float:
        xs = self.per_iteration_ms()
        if len(xs) < 2:
            return 0.0
        m = statistics.fmean(xs)
        return statistics.stdev(xs) / m if m else 0.0


@dataclass
class MatrixResult:
    config: BenchConfig
    cells: Dict[str, Cell]

    def rows(self) -> List[MetricsRow]:
        return [r for c in self.cells.values() for rows in c.runs for r in rows]

    def overheads(self) -> dict:
        return overheads({m: c.mean_ms for m, c in self.cells.items()})


def overheads(mean_ms: Dict[str, float]) -> dict:
    """Relative slowdowns from mean per-iteration times keyed by mode value.

    Encryption overhead compares crypto on vs off with the region fixed, once
    outside the region (crypto-only vs plain) and once inside it (sealed vs
    sealed-plain), and averages the two comparisons that are available.
    Region overhead is the symmetric comparison along the other axis.
    """

    def rel(a, b):
        if a in mean_ms and b in mean_ms and mean_ms[b] > 0:
            return mean_ms[a] / mean_ms[b] - 1.0
        return None

    enc = [x for x in (rel("crypto-only", "plain"), rel("sealed", "sealed-plain")) if x is not None]
    reg = [x for x in (rel("sealed-plain", "plain"), rel("sealed", "crypto-only")) if x is not None]
    return {
        "encryption_overhead": statistics.fmean(enc) if enc else None,
        "encryption_pairs": len(enc),
        "region_overhead": statistics.fmean(reg) if reg else None,
        "region_pairs": len(reg),
    }


async def _kmeans_once(client, cfg: BenchConfig, ps, job_id: str):
    return await client.run_iterative_kmeans(
        ps.points,
        cfg.k_centers,
        ps.init_centers,
        cfg.threshold_fraction,
        n_mappers=cfg.n_mappers,
        n_reducers=cfg.n_reducers,
        max_iterations=cfg.max_iterations or 500,
        job_id=job_id,
    )


async def _run_mode_inprocess(cfg: BenchConfig, mode: str, ps) -> List:
    out = []
    async with LocalCluster(mode, workers=cfg.n_mappers + cfg.n_reducers) as c:
        for rep in range(cfg.repetitions):
            out.append(await _kmeans_once(c.client, cfg, ps, f"bench-{mode}-{rep}"))
    return out


async def _run_mode_processes(cfg: BenchConfig, mode: str, ps) -> List:
    out = []
    with ProcessCluster(mode, workers=cfg.n_mappers + cfg.n_reducers) as pc:
        client = await pc.client()
        try:
            for rep in range(cfg.repetitions):
                out.append(await _kmeans_once(client, cfg, ps, f"bench-{mode}-{rep}"))
        finally:
            client.close()
    return out


def run_matrix(cfg: BenchConfig) -> MatrixResult:
    """Run the same seeded k-means job once per mode and repetition.

    Raises :class:`ResultMismatch` if any mode's final centers or iteration
    count differ from the first mode's (plain when present).
    """
    ps = gen_points(cfg.n_points, cfg.k_centers, cfg.seed)
    if cfg.init == "sample":
        # every cluster starts non-empty, so per-iteration output is k results from the first round
        pick = np.random.default_rng(cfg.seed).choice(cfg.n_points, cfg.k_centers, replace=False)
        ps.init_centers = ps.points[np.sort(pick)].copy()
    runner = _run_mode_processes if cfg.backend == "process" else _run_mode_inprocess
    modes = sorted(cfg.seal_modes, key=lambda m: m != SealMode.PASSTHROUGH_NOCRYPTO.value)
    cells: Dict[str, Cell] = {}
    baseline = None
    for mode in modes:
        runs = asyncio.run(runner(cfg, mode, ps))
        cell = Cell(mode, cfg.n_points, cfg.k_centers)
        for run in runs:
            rows = [
                MetricsRow(m.iteration, round(m.wall_ms, 3), m.split_bytes, m.shuffle_bytes, m.output_bytes, mode, round(m.cache_proxy, 1))
                for m in run.metrics
            ]
            cell.runs.append(rows)
            cell.centers.append(run.centers)
            cell.iterations.append(run.iterations)
            outcome = (run.iterations, run.centers)
            if baseline is None:
                baseline = (mode, outcome)
            elif outcome != baseline[1]:
                raise ResultMismatch(
                    f"mode {mode} disagrees with {baseline[0]} on n={cfg.n_points}, k={cfg.k_centers}: "
                    f"{run.iterations} vs {baseline[1][0]} iterations"
                )
        cells[mode] = cell
        log.info("n=%d k=%d %s: %.1f ms/iteration over %d iterations", cfg.n_points, cfg.k_centers, mode, cell.mean_ms, cell.iterations[0])
    return MatrixResult(cfg, cells)


def write_csv(results: Sequence[MatrixResult], path) -> None:
    """MetricsRow columns; each (mode, n, k, repetition) section is preceded by a ``#`` comment line."""
    with open(path, "w", newline="") as f:
        f.write(",".join(COLUMNS) + "\n")
        w = csv.writer(f)
        for res in results:
            for cell in res.cells.values():
                for rep, rows in enumerate(cell.runs):
                    f.write(f"# mode={cell.mode} n={cell.n} k={cell.k} rep={rep}\n")
                    for r in rows:
                        w.writerow([getattr(r, c) for c in COLUMNS])


def read_csv(path) -> List[MetricsRow]:
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    out = []
    for d in csv.DictReader(lines):
        out.append(
            MetricsRow(
                int(d["iteration"]), float(d["wall_ms"]), int(d["split_bytes"]), int(d["shuffle_bytes"]),
                int(d["output_bytes"]), d["mode"], float(d["cache_proxy"]),
            )
        )
    return out


SUMMARY_COLUMNS = ["n", "k", "mode", "iterations", "mean_iteration_ms", "cv", "encryption_overhead", "region_overhead"]


def summary_rows(results: Sequence[MatrixResult]) -> List[dict]:
    out = []
    for res in results:
        ov = res.overheads()
        for cell in res.cells.values():
            out.append(
                {
                    "n": cell.n,
                    "k": cell.k,
                    "mode": cell.mode,
                    "iterations": cell.iterations[0],
                    "mean_iteration_ms": round(cell.mean_ms, 3),
                    "cv": round(cell.cv, 4),
                    "encryption_overhead": "" if ov["encryption_overhead"] is None else round(ov["encryption_overhead"], 4),
                    "region_overhead": "" if ov["region_overhead"] is None else round(ov["region_overhead"], 4),
                }
            )
    return out


def write_summary(results: Sequence[MatrixResult], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, SUMMARY_COLUMNS)
        w.writeheader()
        w.writerows(summary_rows(results))
