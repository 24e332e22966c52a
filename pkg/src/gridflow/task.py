"""Task plugins: turn a job and its parameter point into a submission."""

from __future__ import annotations

import os
from pathlib import Path

from .backend.base import SubmitRequest
from .backend.local import sandbox_path
from .errors import ConfigError


class UserTask:
    """Runs a user supplied script or executable once per parameter point."""

    def __init__(self, executable: Path, arguments: str = "", input_files=(), section="usertask"):
        self.executable = executable
        self.arguments = arguments
        self.input_files = list(input_files)
        self.section = section

    @classmethod
    def from_config(cls, view, section="usertask", base_dir=".", **_):
        scope = [section, "usertask"]
        raw = view.get(scope, "executable")
        exe = Path(raw)
        if not exe.is_absolute():
            exe = Path(base_dir) / exe
        if not exe.is_file():
            raise ConfigError(f"{view.where(scope, 'executable')}: executable {raw!r} not found")
        if not os.access(exe, os.X_OK):
            raise ConfigError(f"{view.where(scope, 'executable')}: {raw!r} is not executable")
        inputs = []
        for name in view.get_list(scope, "input files"):
            path = Path(name) if Path(name).is_absolute() else Path(base_dir) / name
            if not path.is_file():
                raise ConfigError(f"{view.where(scope, 'input files')}: input file {name!r} not found")
            inputs.append(path)
        return cls(exe.resolve(), view.get(scope, "arguments", ""), inputs, section)

    def request(self, job_id: int, attempt: int, values: dict, requirements: dict, workdir) -> SubmitRequest:
        return SubmitRequest(
            job_id=job_id,
            attempt=attempt,
            values=values,
            executable=self.executable,
            arguments=self.arguments,
            input_files=self.input_files,
            sandbox_dir=sandbox_path(workdir, job_id, attempt),
            requirements=requirements,
        )
