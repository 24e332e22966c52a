from __future__ import annotations

import shutil
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

# (criterion number, title, passed, detail) appended by test_acceptance.py
ACCEPTANCE_RESULTS: list = []


@pytest.fixture
def workspace(tmp_path) -> Path:
    """A private copy of the example configs and the stub job script."""
    for item in DATA.iterdir():
        shutil.copy2(item, tmp_path / item.name)
    return tmp_path


def write_config(directory: Path, text: str, name: str = "task.conf") -> Path:
    """Write ``text`` plus an executable ``job.sh`` next to it."""
    script = directory / "job.sh"
    if not script.exists():
        script.write_text("#!/bin/sh\nexit 0\n")
        script.chmod(0o755)
    path = directory / name
    path.write_text(text)
    return path


def mock_config(n_jobs: int, **mock_options) -> str:
    opts = {"seed": 7, "latency polls": 1, **mock_options}
    mock = "\n".join(f"{k} = {v}" for k, v in opts.items())
    return (
        "[global]\ntask = UserTask\nbackend = mock\ninterval = 0\n"
        f"[jobs]\njobs = {n_jobs}\n"
        "[UserTask]\nexecutable = job.sh\n"
        f"[mock]\n{mock}\n"
    )


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} [{verdict}] {title}: {detail}")
