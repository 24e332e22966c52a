from __future__ import annotations

import io
import os
import re

import pytest

from gridflow import cli, jobdb
from gridflow.backend.mock import MockBackend, MockScript
from gridflow.engine import Engine, parse_selector
from gridflow.errors import ConfigError, LockHeld, SelectorSyntaxError
from gridflow.jobdb import JobRecord, JobState

from .conftest import mock_config, write_config

S = JobState


def _counts(report: str) -> dict:
    line = next(ln for ln in report.splitlines() if ln.startswith("INIT:"))
    return {k: int(v) for k, v in (item.split(":") for item in line.split())}


def _run(argv) -> tuple[int, str]:
    out = io.StringIO()
    args = cli.build_parser().parse_args(argv)
    inv = cli.CliInvocation(args.config, args.continuous, args.delete, args.report, args.config_dump,
                            list(args.overrides))
    return cli.execute(inv, out), out.getvalue()


def _states(engine) -> dict:
    return {rec.job_id: rec.state for rec in engine.db}


# -- selectors -------------------------------------------------------------

def test_selector_grammar():
    recs = [JobRecord(i, S.FAILED if i == 3 else S.RUNNING) for i in range(7)]
    pick = lambda text: [r.job_id for r in recs if parse_selector(text)(r)]  # noqa: E731
    assert pick("ALL") == list(range(7))
    assert pick("1-2,5") == [1, 2, 5]
    assert pick("state:failed") == [3]
    for bad in ("", "1-", "3-1", "x", "state:BORED"):
        with pytest.raises(SelectorSyntaxError):
            parse_selector(bad)


def test_invocation_rejects_continuous_with_delete(tmp_path):
    with pytest.raises(ValueError):
        cli.CliInvocation(tmp_path / "x.conf", continuous=True, cancel_selector="ALL")


# -- run_once ----------------------------------------------------------------

def test_helloworld_first_run_submits_two(workspace):
    code, report = _run([str(workspace / "HelloWorld.conf"), "-o", "global.backend=mock"])
    assert code == 0
    assert _counts(report)["SUBMITTED"] == 2
    assert "job 0: (new) -> SUBMITTED" in report


def test_finished_task_is_a_fixpoint(tmp_path):
    config = write_config(tmp_path, mock_config(3, **{"latency polls": 0}))
    reports = [_run([str(config)])[1] for _ in range(4)]
    assert _counts(reports[1])["SUCCESS"] == 3
    assert reports[2].splitlines()[-2:] == reports[3].splitlines()[-2:] == reports[1].splitlines()[-2:]
    assert not any(ln.startswith("job ") for ln in reports[3].splitlines())


def test_edited_sweep_rerun_disables_one_and_appends_one(workspace):
    config = workspace / "parameters.conf"
    _run([str(config), "-o", "global.backend=mock"])
    config.write_text(config.read_text().replace("MUR = 1 2", "MUR = 0.5 1"))
    with Engine(config, ("global.backend=mock",)) as engine:
        assert engine.startup == {"disabled": [5], "appended": [6]}
        assert engine.changes[5] == (S.SUBMITTED, S.DISABLED)
        assert engine.changes[6] == (None, S.INIT)
        assert engine.points[6].values == {"MUR": "0.5", "MUF": "0.5", "VAR": ""}
        cancelled = engine.backend.cancelled
        assert cancelled == ["mock.5.0"]
        engine.cycle()
        report = engine.report()
    assert "job 5: SUBMITTED -> DISABLED" in report
    assert "job 6: (new) -> SUBMITTED" in report
    assert _counts(report)["DISABLED"] == 1
    assert re.search(r"total:7 ", report)


def test_report_counts_sum_to_total(tmp_path):
    config = write_config(tmp_path, mock_config(20, **{"failure rate": 0.3, "latency polls": 1}))
    for _ in range(5):
        code, report = _run([str(config)])
        total = int(re.search(r"total:(\d+)", report).group(1))
        assert sum(_counts(report).values()) == total == 20


def test_report_only_reads_without_lock(tmp_path):
    config = write_config(tmp_path, mock_config(4))
    _run([str(config)])
    with Engine(config) as engine:  # holds the lock
        code, report = _run([str(config), "--report"])
        assert code == 0
        assert _counts(report) == {**{s.value: 0 for s in S}, **_counts(engine.report())}


def test_submit_failure_consumes_no_retry(tmp_path):
    config = write_config(tmp_path, mock_config(3) + "[jobs]\nmax retries = 0\n")
    backend = MockBackend(MockScript(seed=1, latency_polls=0, submit_failure_rate=1.0))
    with Engine(config, backend=backend) as engine:
        stats = engine.cycle()
        assert stats.submit_failures == 3
        assert all(rec.state == S.INIT and rec.attempt == 0 for rec in engine.db)
        backend.script = MockScript(seed=1, latency_polls=0)
        for _ in range(3):
            engine.cycle()
        assert set(_states(engine).values()) == {S.SUCCESS}


def test_failed_job_is_retried_until_limit(tmp_path):
    config = write_config(tmp_path, mock_config(2, **{"forced outcomes": "1:failed", "latency polls": 0})
                          + "[jobs]\nmax retries = 2\n")
    with Engine(config) as engine:
        for _ in range(12):
            engine.cycle()
        assert engine.finished()
        assert engine.db[0].state == S.SUCCESS
        assert (engine.db[1].state, engine.db[1].attempt) == (S.FAILED, 2)
        assert engine.backend.calls["submit"] == 4


def test_priorities_of_config_errors(tmp_path):
    config = write_config(tmp_path, mock_config(1) + "[jobs]\nchunk size = 0\n")
    with pytest.raises(ConfigError):
        Engine(config)
    assert cli.main([str(config), "-q"]) == cli.EXIT_CONFIG


# -- continuous --------------------------------------------------------------

def test_continuous_mock_run_terminates(tmp_path):
    config = write_config(tmp_path, mock_config(10, **{"latency polls": 2}))
    with Engine(config) as engine:
        out = io.StringIO()
        assert cli.run_continuous(engine, 0, out, max_cycles=50) == 0
        # submit in cycle 1, then queued/running/done on three polls, retrieved on the last
        assert engine.db.generation == 5
    assert _counts(out.getvalue())["SUCCESS"] == 10


def test_continuous_with_zero_jobs_stops_after_one_cycle(tmp_path):
    config = write_config(tmp_path, mock_config(0))
    with Engine(config) as engine:
        cli.run_continuous(engine, 3600, io.StringIO())
        assert engine.db.generation == 2 and len(engine.db) == 0


def test_restart_does_not_resubmit(tmp_path):
    config = write_config(tmp_path, mock_config(5, **{"latency polls": 3}))
    with Engine(config) as engine:
        engine.cycle()
    with Engine(config) as engine:
        for _ in range(6):
            engine.cycle()
        assert engine.backend.calls["submit"] == 0
        assert set(_states(engine).values()) == {S.SUCCESS}


# -- cancel ------------------------------------------------------------------

def _in_flight_engine(tmp_path, n=6, **extra):
    config = write_config(tmp_path, mock_config(n, **{"latency polls": 50}) + "".join(
        f"[jobs]\n{k} = {v}\n" for k, v in extra.items()))
    backend = MockBackend(MockScript(latency_polls=50))
    engine = Engine(config, backend=backend).open()
    engine.cycle()
    engine.cycle()
    return engine, backend


def test_delete_all_cancels_three_in_flight(tmp_path):
    engine, backend = _in_flight_engine(tmp_path, n=5, **{"in flight": 3})
    try:
        assert engine.db.in_flight() == 3
        assert engine.cancel("ALL") == 3
        assert len(backend.cancelled) == 3
        assert "active:0" in engine.report()
        assert [engine.db[j].state for j in range(5)] == [S.CANCELLED] * 3 + [S.INIT] * 2
    finally:
        engine.close()


def test_delete_ranges_and_states(tmp_path):
    engine, backend = _in_flight_engine(tmp_path)
    try:
        assert engine.cancel("state:FAILED") == 0
        assert engine.cancel("1-2,5") == 3
        assert backend.cancelled == ["mock.1.0", "mock.2.0", "mock.5.0"]
        assert [j for j, s in _states(engine).items() if s == S.CANCELLED] == [1, 2, 5]
        assert engine.cancel("1-2") == 0
    finally:
        engine.close()


def test_delete_all_from_cli(tmp_path):
    config = write_config(tmp_path, mock_config(4, **{"latency polls": 50}))
    _run([str(config)])
    code, report = _run([str(config), "-d", "ALL"])
    assert code == 0
    assert "active:0" in report and _counts(report)["CANCELLED"] == 4
    assert cli.main([str(config), "-q", "-d", "7-"]) == cli.EXIT_CONFIG


# -- locking, flags, exit codes -------------------------------------------------

def test_second_instance_gets_lock_held(tmp_path):
    config = write_config(tmp_path, mock_config(1))
    with Engine(config):
        with pytest.raises(LockHeld):
            Engine(config).open()
        assert cli.main([str(config), "-q"]) == cli.EXIT_LOCKED


def test_stale_lock_is_taken_over(tmp_path):
    config = write_config(tmp_path, mock_config(1))
    workdir = tmp_path / "work.task"
    workdir.mkdir()
    (workdir / "lock").write_text("999999999\n")
    assert cli.main([str(config), "-q"]) == 0
    assert not (workdir / "lock").exists()


def test_missing_config_is_config_error(tmp_path):
    assert cli.main([str(tmp_path / "absent.conf"), "-q"]) == cli.EXIT_CONFIG


def test_internal_error_exit_code(tmp_path):
    config = write_config(tmp_path, mock_config(2))
    _run([str(config)])
    (tmp_path / "work.task" / jobdb.JOB_FILE).write_text("garbage\n")
    assert cli.main([str(config), "-q"]) == cli.EXIT_INTERNAL


def test_config_dump(workspace, capsys):
    assert cli.main([str(workspace / "parameters.conf"), "--config-dump", "-o", "jobs.jobs=5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines == sorted(lines)
    assert "jobs.jobs = 5" in lines
    assert "pspace1.mur = 1 2" in [ln.lower() for ln in lines]


def test_help_lists_verbs(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--continuous", "--delete", "--report", "--config-dump", "-o"):
        assert flag in text


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    config = write_config(tmp_path, mock_config(2))
    proc = subprocess.run([sys.executable, "-m", "gridflow", "-q", str(config)],
                          capture_output=True, text=True, env={**os.environ}, check=False)
    assert proc.returncode == 0, proc.stderr
    assert "SUBMITTED:2" in proc.stdout


# -- datasets and requirements -------------------------------------------------

def test_dataset_backed_jobs(tmp_path):
    manifest = tmp_path / "files.txt"
    manifest.write_text("[ds#b1]\nlocations = siteA\n/a 100\n/b 100\n")
    text = (
        "[global]\nbackend = mock\ninterval = 0\n"
        "[jobs]\nwall time = 1:30\n"
        "[UserTask]\nexecutable = job.sh\n"
        "[mock]\nlatency polls = 0\n"
        f"[dataset]\nsource = {manifest}\npartitioner = work-unit\nunits per job = 80\n"
        "[parameters]\nparameters = SETTING\nSETTING = a b\n"
    )
    config = write_config(tmp_path, text)
    with Engine(config) as engine:
        assert len(engine.db) == 3 * 2
        values, reqs = engine.job_inputs(0)
        assert values["FILE_NAMES"] == "/a"
        assert values["SETTING"] == "a"
        assert reqs == {"WALLTIME": 5400, "LOCATION": ["siteA"]}
        for _ in range(3):
            engine.cycle()
        assert engine.finished()
    # a grown file keeps its finished jobs and gains tail jobs
    manifest.write_text("[ds#b1]\nlocations = siteA\n/a 100\n/b 130\n")
    with Engine(config) as engine:
        assert engine.startup == {"disabled": [], "appended": [6, 7]}
        assert engine.job_inputs(6)[0]["FILE_NAMES"] == "/b"
        assert engine.job_inputs(6)[0]["SKIP_EVENTS"] == "100"
        for _ in range(3):
            engine.cycle()
    # shrinking /a below the first slice invalidates every job over /a
    manifest.write_text("[ds#b1]\nlocations = siteA\n/a 50\n/b 130\n")
    with Engine(config) as engine:
        assert engine.startup["disabled"] == [0, 1, 2, 3]
        assert engine.startup["appended"][0] == 8
        assert all(engine.db[j].state == S.SUCCESS for j in (4, 5, 6, 7))
