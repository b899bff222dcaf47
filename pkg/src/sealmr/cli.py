"""Console entry points: sealmr-router, sealmr-worker, sealmr-client, sealmr-bench."""

from __future__ import annotations

import argparse
import asyncio
import csv
import json
import logging
import sys
from pathlib import Path

from .region import SealMode
from .script import DEFAULT_BUDGET, Role

MODE_CHOICES = [m.value for m in SealMode]


def _logging(level: str):
    logging.basicConfig(level=getattr(logging, level.upper()), stream=sys.stderr, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seal-mode", default="sealed", choices=MODE_CHOICES)
    p.add_argument("--log-level", default="INFO")


def _csv_ints(text: str):
    return [int(x) for x in text.split(",") if x]


# -- router -----------------------------------------------------------------------


def router_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sealmr-router", description="Content-based router for sealed MapReduce jobs.")
    p.add_argument("--listen", default="127.0.0.1:7100", help="host:port (port 0 picks a free one)")
    p.add_argument("--diag", default=None, help="local-only host:port serving plaintext counters as one JSON line")
    _common(p)
    return p


def router_main(argv=None):
    args = router_parser().parse_args(argv)
    _logging(args.log_level)
    from .router import run_router

    def ready(addr, diag=None):
        print(f"listening {addr[0]}:{addr[1]}", flush=True)
        if diag is not None:
            print(f"diagnostics {diag[0]}:{diag[1]}", flush=True)

    try:
        asyncio.run(run_router(args.listen, SealMode.parse(args.seal_mode), args.diag, ready))
    except KeyboardInterrupt:
        pass


# -- worker -----------------------------------------------------------------------


def worker_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sealmr-worker", description="Volunteer worker running map/reduce scripts in a sealed region.")
    p.add_argument("--router", required=True, help="router host:port")
    p.add_argument("--roles", default="mapper,reducer", help="comma-separated, in order of preference")
    p.add_argument("--script-budget", type=int, default=DEFAULT_BUDGET, help="VM instruction budget per script call")
    p.add_argument("--node-id", default=None)
    _common(p)
    return p


def worker_main(argv=None):
    args = worker_parser().parse_args(argv)
    _logging(args.log_level)
    from .worker import run_worker

    roles = [Role.parse(r.strip()) for r in args.roles.split(",") if r.strip()]
    try:
        asyncio.run(run_worker(args.router, roles, SealMode.parse(args.seal_mode), args.script_budget, args.node_id))
    except KeyboardInterrupt:
        pass


# -- client -----------------------------------------------------------------------

METRICS_COLUMNS = ["iteration", "wall_ms", "split_bytes", "shuffle_bytes", "output_bytes", "seal_mode"]


def client_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sealmr-client", description="Submit a MapReduce job to volunteer workers.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one job (or an iterative k-means job)")
    r.add_argument("--router", required=True)
    r.add_argument("--map", required=True, type=Path, help="mapper Lua script")
    r.add_argument("--reduce", required=True, type=Path, help="reducer Lua script")
    r.add_argument("--mappers", type=int, default=2)
    r.add_argument("--reducers", type=int, default=1)
    r.add_argument("--input", required=True, type=Path)
    r.add_argument("--iterative", choices=["kmeans"], default=None)
    r.add_argument("--k", type=int, default=None)
    r.add_argument("--threshold-frac", type=float, default=1e-3)
    r.add_argument("--seed", type=int, default=0, help="seeds the initial centers (bottom-left corner of the data)")
    r.add_argument("--max-iterations", type=int, default=500)
    r.add_argument("--metrics", type=Path, default=None, help="per-iteration metrics CSV")
    r.add_argument("--timeout", type=float, default=300.0, help="seconds to wait for results")
    _common(r)
    return p


def write_metrics(path, metrics) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_COLUMNS)
        for m in metrics:
            w.writerow([m.iteration, round(m.wall_ms, 3), m.split_bytes, m.shuffle_bytes, m.output_bytes, m.seal_mode])


async def _client_run(args) -> dict:
    import uuid

    from . import kmeans
    from .client import Client, JobSpec
    from .region import SealedContext

    ctx = SealedContext.from_env(args.seal_mode, region_id="client")
    client = await Client(ctx).connect(args.router)
    # give volunteers' subscriptions a moment to settle
    await asyncio.sleep(0.2)
    map_src = args.map.read_text(encoding="utf-8")
    reduce_src = args.reduce.read_text(encoding="utf-8")
    try:
        if args.iterative == "kmeans":
            if not args.k:
                raise SystemExit("--iterative kmeans needs --k")
            points = kmeans.read_points(args.input)
            init = kmeans.corner_centers(kmeans.bounding_box(points), args.k, args.seed)
            res = await client.run_iterative_kmeans(
                points, args.k, init, args.threshold_frac,
                map_script=map_src, reduce_script=reduce_src,
                n_mappers=args.mappers, n_reducers=args.reducers,
                max_iterations=args.max_iterations, result_timeout=args.timeout,
            )
            logging.getLogger("sealmr.client").info("k-means stopped after %d iterations", res.iterations)
            metrics = res.metrics
            out = {str(i): c for i, c in enumerate(res.centers)}
        else:
            lines = args.input.read_text(encoding="utf-8").splitlines()
            spec = JobSpec(f"job-{uuid.uuid4().hex[:8]}", map_src, reduce_src, args.mappers, args.reducers, lines)
            run = await client.open_job(spec)
            try:
                out, m = await client.run_round(run, spec, 0, None, args.timeout)
            finally:
                await client.close_job(run)
            metrics = [m]
    finally:
        client.close()
    if args.metrics is not None:
        write_metrics(args.metrics, metrics)
    return out


def client_main(argv=None):
    args = client_parser().parse_args(argv)
    _logging(args.log_level)
    from .errors import SealMRError

    try:
        out = asyncio.run(_client_run(args))
    except SealMRError as exc:
        print(f"sealmr-client: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    json.dump(out, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return 0


# -- bench ------------------------------------------------------------------------


def bench_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sealmr-bench", description="Per-iteration k-means timing across seal modes.")
    p.add_argument("--n", type=_csv_ints, default=[1000, 10000])
    p.add_argument("--k", type=_csv_ints, default=[10])
    p.add_argument("--modes", default="plain,crypto-only,sealed", help=f"comma-separated from {','.join(MODE_CHOICES)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("metrics.csv"))
    p.add_argument("--summary", type=Path, default=None, help="defaults to <out>.summary.csv")
    p.add_argument("--mappers", type=int, default=2)
    p.add_argument("--reducers", type=int, default=2)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--threshold-frac", type=float, default=1e-3)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--backend", choices=["process", "inprocess"], default="process")
    p.add_argument("--init", choices=["corner", "sample"], default="corner", help="initial centers: bottom-left corner, or k input points")
    p.add_argument("--log-level", default="INFO")
    return p


def bench_main(argv=None):
    args = bench_parser().parse_args(argv)
    _logging(args.log_level)
    from .bench import BenchConfig, ResultMismatch, run_matrix, summary_rows, write_csv, write_summary

    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    results = []
    try:
        for k in args.k:
            for n in args.n:
                cfg = BenchConfig(
                    n, k, args.mappers, args.reducers, modes, args.seed, args.repetitions,
                    args.threshold_frac, args.max_iterations, args.backend, args.init,
                )
                results.append(run_matrix(cfg))
    except ResultMismatch as exc:
        print(f"sealmr-bench: aborting: {exc}", file=sys.stderr)
        return 2
    write_csv(results, args.out)
    summary = args.summary or args.out.with_suffix(".summary.csv")
    write_summary(results, summary)
    for row in summary_rows(results):
        print("  ".join(f"{k}={v}" for k, v in row.items()))
    return 0


_COMMANDS = {"router": router_main, "worker": worker_main, "client": client_main, "bench": bench_main}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in _COMMANDS:
        print(f"usage: python -m sealmr.cli {{{','.join(_COMMANDS)}}} ...", file=sys.stderr)
        return 2
    return _COMMANDS[argv[0]](argv[1:])


if __name__ == "__main__":
    sys.exit(main())
