from __future__ import annotations

import csv
import io
import math

import pytest

from gridflow import bench
from gridflow.dataset.providers import ManifestProvider


def test_one_block_geometry(tmp_path):
    workload = bench.generate_workload(1, tmp_path, seed=3)
    blocks = ManifestProvider(tmp_path / "workload.manifest").blocks()
    assert len(blocks) == 9
    assert sum(len(b.files) for b in blocks) == 891
    assert len({b.dataset for b in blocks}) == 9
    assert workload.jobs == 891 * 3


def test_same_seed_gives_identical_manifests(tmp_path):
    bench.generate_workload(2, tmp_path / "a", seed=11)
    bench.generate_workload(2, tmp_path / "b", seed=11)
    bench.generate_workload(2, tmp_path / "c", seed=12)
    read = lambda d: (tmp_path / d / "workload.manifest").read_bytes()  # noqa: E731
    assert read("a") == read("b")
    assert read("a") != read("c")


def test_job_count_arithmetic_at_2000_blocks():
    # file-count(99) turns each 99-file block into one partition
    expected = 9 * 2000 * math.ceil(99 / 99) * 3
    assert bench.expected_jobs(2000, 99) == expected == 54_000
    assert 10**4.5 < expected < 10**5.5
    assert bench.expected_jobs(2000, 1) == 5_346_000
    assert bench.expected_jobs(37) == 98_901


def test_blocks_for_jobs_targets():
    assert [bench.blocks_for_jobs(t) for t in (3_000, 10_000, 30_000, 100_000)] == [1, 4, 11, 37]
    assert bench.blocks_for_jobs(1) == 1


def test_rejects_empty_workload(tmp_path):
    with pytest.raises(ValueError):
        bench.generate_workload(0, tmp_path)


def test_linear_r2():
    assert bench.linear_r2([1, 2, 3, 4], [3, 5, 7, 9]) == pytest.approx(1.0)
    assert bench.linear_r2([1, 2, 3, 4], [1, 4, 9, 16]) < 0.99
    assert bench.linear_r2([1, 2, 3], [5, 5, 5]) == 1.0


def test_measure_drives_workload_to_completion(tmp_path):
    workload = bench.generate_workload(1, tmp_path, files_per_job=9, chunk_size=50)
    data = bench.measure(workload.config)
    assert data["jobs"] == workload.jobs == 9 * 11 * 3
    assert data["sort_passes"] == math.ceil(workload.jobs / 50)
    assert data["peak_rss_bytes"] > 1_000_000


def test_run_benchmark_csv_and_pass_ratio(tmp_path):
    # about 1k and 10k jobs: files_per_job 3 gives 9 * 33 * 3 = 891 jobs per block
    rows = bench.run_benchmark([1, 11], chunk_sizes=(100, 1000), files_per_job=3, workroot=tmp_path)
    assert [(r.n_blocks, r.chunk_size) for r in rows] == [(1, 100), (1, 1000), (11, 100), (11, 1000)]
    assert [r.jobs for r in rows] == [891, 891, 9801, 9801]
    by = {(r.n_blocks, r.chunk_size): r for r in rows}
    assert by[1, 100].sort_passes == 9 and by[11, 100].sort_passes == 99
    assert by[11, 100].sort_passes / by[1, 100].sort_passes == pytest.approx(10, rel=0.15)
    assert by[11, 1000].sort_passes < by[11, 100].sort_passes
    assert all(r.peak_rss_bytes > 0 and r.cpu_user_s >= 0 and r.wall_s > 0 for r in rows)
    out = io.StringIO()
    bench.write_csv(rows, out)
    parsed = list(csv.DictReader(io.StringIO(out.getvalue())))
    assert list(parsed[0]) == bench.CSV_COLUMNS
    assert len(parsed) == 4


def test_failed_point_gives_blank_row(tmp_path):
    workload = bench.generate_workload(1, tmp_path)
    workload.config.write_text(workload.config.read_text().replace("backend = mock", "backend = nowhere"))
    row = bench.run_point(workload, 100)
    assert (row.n_blocks, row.jobs, row.chunk_size) == (1, workload.jobs, 100)
    assert row.peak_rss_bytes is None and row.sort_passes is None
    out = io.StringIO()
    bench.write_csv([row], out)
    assert out.getvalue().splitlines()[1] == f"1,{workload.jobs},100,,,,,"


def test_single_job_workload_is_one_pass(tmp_path):
    workload = bench.generate_workload(1, tmp_path, files_per_job=99)
    text = workload.config.read_text().replace("SETTING = s0 s1 s2", "SETTING = s0")
    text = text.replace("source = manifest:workload.manifest", "source = synthetic:datasets=1,blocks=1,files=99")
    workload.config.write_text(text)
    data = bench.measure(workload.config)
    assert (data["jobs"], data["sort_passes"]) == (1, 1)
