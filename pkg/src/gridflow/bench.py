"""Scaling benchmark: synthetic workloads driven against the mock backend.

Each benchmark point runs in a fresh interpreter so that peak RSS
(``ru_maxrss``) belongs to that point alone.  Usage::

    gridflow-bench --sizes 1,4,11,37 --chunk-sizes 100,1000 --out bench.csv
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import resource
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .dataset.providers import SyntheticProvider, write_manifest

DATASETS = 9
FILES_PER_BLOCK = 99
USER_POINTS = 3

CONFIG_TEMPLATE = """\
[global]
task = UserTask
backend = mock
workdir = work
interval = 0

[jobs]
chunk size = {chunk_size}
max retries = 0

[UserTask]
executable = job.sh

[mock]
seed = {seed}
latency polls = 1

[data]
source = manifest:workload.manifest
partitioner = file-count
files per job = {files_per_job}

[parameters]
parameters = <data> SETTING
SETTING = {settings}
"""


@dataclass
class Workload:
    directory: Path
    config: Path
    n_blocks: int
    jobs: int


@dataclass
class BenchRun:
    n_blocks: int
    jobs: int
    chunk_size: int
    peak_rss_bytes: int | None
    cpu_user_s: float | None
    cpu_sys_s: float | None
    sort_passes: int | None
    wall_s: float | None


CSV_COLUMNS = [f.name for f in fields(BenchRun)]


def expected_jobs(n_blocks: int, files_per_job: int = 1) -> int:
    """Job count implied by the workload geometry and file-count partitioning."""
    return DATASETS * n_blocks * math.ceil(FILES_PER_BLOCK / files_per_job) * USER_POINTS


def blocks_for_jobs(target: int, files_per_job: int = 1) -> int:
    """Block count whose workload comes closest to ``target`` jobs (at least 1)."""
    per_block = expected_jobs(1, files_per_job)
    return max(1, round(target / per_block))


def generate_workload(n_blocks: int, outdir, seed: int = 0, files_per_job: int = 1,
                      chunk_size: int = 100) -> Workload:
    """Write ``workload.manifest``, ``job.sh`` and ``workload.conf`` into ``outdir``."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    blocks = SyntheticProvider(DATASETS, n_blocks, FILES_PER_BLOCK, seed).blocks()
    write_manifest(blocks, outdir / "workload.manifest")
    script = outdir / "job.sh"
    script.write_text("#!/bin/sh\nexit 0\n")
    script.chmod(0o755)
    config = outdir / "workload.conf"
    config.write_text(CONFIG_TEMPLATE.format(
        chunk_size=chunk_size, seed=seed, files_per_job=files_per_job,
        settings=" ".join(f"s{i}" for i in range(USER_POINTS)),
    ))
    return Workload(outdir, config, n_blocks, expected_jobs(n_blocks, files_per_job))


def measure(config_path, max_cycles: int = 50) -> dict:
    """Drive one workload to completion in this process and report resource use."""
    from .engine import Engine

    start = time.perf_counter()
    with Engine(Path(config_path)) as engine:
        for _ in range(max_cycles):
            engine.cycle()
            if engine.finished():
                break
        passes = engine.db.sort_passes["submit"]
        jobs = len(engine.db)
    usage = resource.getrusage(resource.RUSAGE_SELF)
    return {
        "jobs": jobs,
        "peak_rss_bytes": peak_rss_bytes(usage),
        "cpu_user_s": usage.ru_utime,
        "cpu_sys_s": usage.ru_stime,
        "sort_passes": passes,
        "wall_s": time.perf_counter() - start,
    }


def peak_rss_bytes(usage=None) -> int:
    """Peak resident set size of this process.

    Linux keeps ``ru_maxrss`` across ``execve``, so a child forked from a
    large parent would report the parent's peak; ``VmHWM`` belongs to the
    current address space only and is preferred when available.
    """
    try:
        with open("/proc/self/status") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    usage = usage or resource.getrusage(resource.RUSAGE_SELF)
    scale = 1 if sys.platform == "darwin" else 1024  # ru_maxrss is KiB on Linux
    return usage.ru_maxrss * scale


def run_point(workload: Workload, chunk_size: int, timeout: float | None = None) -> BenchRun:
    """Measure one workload in a fresh interpreter; failures give a blank row."""
    text = workload.config.read_text()
    lines = [f"chunk size = {chunk_size}" if ln.startswith("chunk size =") else ln for ln in text.splitlines()]
    workload.config.write_text("\n".join(lines) + "\n")
    blank = BenchRun(workload.n_blocks, workload.jobs, chunk_size, None, None, None, None, None)
    try:
        proc = subprocess.run(
            [sys.executable, "-m", "gridflow.bench", "--measure", str(workload.config)],
            capture_output=True, text=True, timeout=timeout, check=False,
            env={**os.environ, "PYTHONHASHSEED": "0"},
        )
    except subprocess.TimeoutExpired:
        return blank
    if proc.returncode != 0:
        print(proc.stderr, file=sys.stderr)
        return blank
    data = json.loads(proc.stdout.strip().splitlines()[-1])
    return BenchRun(workload.n_blocks, data["jobs"], chunk_size, data["peak_rss_bytes"],
                    data["cpu_user_s"], data["cpu_sys_s"], data["sort_passes"], data["wall_s"])


def run_benchmark(sizes, chunk_sizes=(100,), seed: int = 0, files_per_job: int = 1,
                  workroot=None) -> list[BenchRun]:
    """One row per (n_blocks, chunk size); every point gets a fresh work directory."""
    rows = []
    with tempfile.TemporaryDirectory(dir=workroot) as tmp:
        for n_blocks in sizes:
            for chunk_size in chunk_sizes:
                outdir = Path(tmp) / f"b{n_blocks}_m{chunk_size}"
                workload = generate_workload(n_blocks, outdir, seed, files_per_job, chunk_size)
                rows.append(run_point(workload, chunk_size))
    return rows


def write_csv(rows, out) -> None:
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in asdict(row).items()})


def linear_r2(xs, ys) -> float:
    """Coefficient of determination of the least-squares line through (xs, ys)."""
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        return 1.0 if syy == 0 else 0.0
    return sxy * sxy / (sxx * syy)


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gridflow-bench", description="Scaling benchmark on the mock backend.")
    parser.add_argument("--sizes", type=_ints, default=[1, 4, 11, 37], help="comma list of blocks per dataset")
    parser.add_argument("--chunk-sizes", type=_ints, default=[100], help="comma list of chunk sizes M")
    parser.add_argument("--files-per-job", type=int, default=1, help="file-count partitioner target")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, help="CSV output file (default: stdout)")
    parser.add_argument("--measure", type=Path, help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.measure:
        print(json.dumps(measure(args.measure)))
        return 0
    rows = run_benchmark(args.sizes, args.chunk_sizes, args.seed, args.files_per_job)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
