"""Runs jobs as local processes through a generated shell wrapper.

Sandbox files: ``wrapper.sh``, ``job.submitted`` (submission marker),
``wrapper.pid``, ``job.pid``, ``job.stdout``, ``job.stderr`` and, once the
executable finished, ``job.info`` with ``EXITCODE=<n>``.
"""

from __future__ import annotations

import contextlib
import logging
import os
import re
import shlex
import shutil
import signal
import subprocess
from collections import deque
from pathlib import Path

from ..errors import SubmitFailed, UnknownHandle
from .base import Backend, BackendEvent, CancelOutcome, SubmitRequest, parse_handle

log = logging.getLogger(__name__)

_ENV_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def sandbox_path(workdir, job_id: int, attempt: int) -> Path:
    return Path(workdir) / "jobs" / str(job_id) / f"attempt_{attempt}"


def render_wrapper(req: SubmitRequest) -> str:
    lines = [
        "#!/bin/sh",
        "# generated by gridflow",
        'cd "$(dirname "$0")" || exit 1',
        "echo $$ > wrapper.pid",
        f"export GC_JOB_ID={shlex.quote(str(req.job_id))}",
        f"export GC_ATTEMPT={shlex.quote(str(req.attempt))}",
    ]
    for var, value in req.values.items():
        if _ENV_NAME.match(var):
            lines.append(f"export {var}={shlex.quote(value)}")
        else:
            log.warning("job %s: variable %r is not a valid environment name", req.job_id, var)
    command = shlex.quote(str(req.executable))
    if req.arguments:
        command += " " + req.arguments
    lines += [
        f"{command} > job.stdout 2> job.stderr &",
        "child=$!",
        "echo $child > job.pid",
        "trap 'kill -TERM $child 2>/dev/null' TERM INT",
        "wait $child",
        "rc=$?",
        'echo "EXITCODE=$rc" > job.info.tmp',
        "mv job.info.tmp job.info",
        "",
    ]
    return "\n".join(lines)


def read_exit_code(sandbox: Path) -> int | None:
    try:
        text = (sandbox / "job.info").read_text()
    except OSError:
        return None
    for line in text.splitlines():
        if line.startswith("EXITCODE="):
            try:
                return int(line.split("=", 1)[1])
            except ValueError:
                return None
    return None


def _pid_from(path: Path) -> int | None:
    try:
        return int(path.read_text().strip())
    except (OSError, ValueError):
        return None


def _alive(pid: int | None) -> bool:
    if not pid:
        return False
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    # reap zombies of our own children
    with contextlib.suppress(ChildProcessError, OSError):
        done, _ = os.waitpid(pid, os.WNOHANG)
        if done == pid:
            return False
    return True


class LocalBackend(Backend):
    def __init__(self, workdir, slots: int | None = None, name: str = "local"):
        self.workdir = Path(workdir)
        self.slots = slots or os.cpu_count() or 1
        self.name = name
        self.queue: deque[str] = deque()
        self.procs: dict[str, subprocess.Popen] = {}
        self.last: dict[str, str] = {}
        self.cancelled: set[str] = set()
        self.dequeued: set[str] = set()

    @classmethod
    def from_config(cls, view, section="local", name="local", workdir=None, **_):
        slots = view.get_int([section, "local"], "slots", str(os.cpu_count() or 1))
        return cls(workdir, slots, name)

    def _sandbox(self, handle: str) -> Path:
        parsed = parse_handle(handle, self.name)
        if parsed is None:
            raise UnknownHandle(handle)
        return sandbox_path(self.workdir, *parsed)

    def find(self, job_id, attempt):
        sandbox = sandbox_path(self.workdir, job_id, attempt)
        return f"{self.name}.{job_id}.{attempt}" if (sandbox / "job.submitted").exists() else None

    def submit(self, req: SubmitRequest) -> str:
        handle = f"{self.name}.{req.job_id}.{req.attempt}"
        sandbox = sandbox_path(self.workdir, req.job_id, req.attempt)
        if (sandbox / "job.submitted").exists():
            return handle
        exe = Path(req.executable) if req.executable else None
        if exe is None or not exe.is_file() or not os.access(exe, os.X_OK):
            raise SubmitFailed(f"executable {exe} is missing or not executable")
        try:
            sandbox.mkdir(parents=True, exist_ok=True)
            for src in req.input_files:
                shutil.copy2(src, sandbox / Path(src).name)
            wrapper = sandbox / "wrapper.sh"
            wrapper.write_text(render_wrapper(req))
            wrapper.chmod(0o755)
            (sandbox / "job.submitted").write_text(handle + "\n")
        except OSError as exc:
            raise SubmitFailed(f"cannot prepare sandbox {sandbox}: {exc}") from exc
        self.queue.append(handle)
        self._start_queued()
        return handle

    def _start_queued(self) -> None:
        running = sum(1 for p in self.procs.values() if p.poll() is None)
        while self.queue and running < self.slots:
            handle = self.queue.popleft()
            sandbox = self._sandbox(handle)
            self.procs[handle] = subprocess.Popen(
                ["/bin/sh", str(sandbox / "wrapper.sh")],
                cwd=sandbox,
                stdin=subprocess.DEVNULL,
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
                start_new_session=True,
            )
            running += 1

    def _status(self, handle: str):
        sandbox = self._sandbox(handle)
        if handle in self.queue:
            return "queued", None
        proc = self.procs.get(handle)
        if proc is not None and proc.poll() is None:
            return "running", None
        code = read_exit_code(sandbox)
        if code is not None:
            return ("done" if code == 0 else "failed"), code
        if proc is not None:
            # wrapper died without writing job.info
            return "failed", proc.returncode if proc.returncode else -1
        if not (sandbox / "job.submitted").exists():
            raise UnknownHandle(handle)
        if (sandbox / "wrapper.pid").exists():
            if _alive(_pid_from(sandbox / "wrapper.pid")):
                return "running", None
            return "failed", -1
        # submitted by an earlier process but never started
        self.queue.append(handle)
        return "queued", None

    def poll(self, handles) -> list[BackendEvent]:
        self._start_queued()
        events = []
        for handle in handles:
            if self.last.get(handle) in ("done", "failed", "cancelled"):
                continue
            if handle in self.dequeued:
                self.last[handle] = "cancelled"
                events.append(BackendEvent(handle, "cancelled", None))
                continue
            kind, code = self._status(handle)
            if handle in self.cancelled and kind != "queued":
                kind, code = ("cancelled", None) if kind in ("running", "failed") else (kind, code)
            if kind == self.last.get(handle):
                continue
            self.last[handle] = kind
            events.append(BackendEvent(handle, kind, code if kind in ("done", "failed") else None))
        self._start_queued()
        return events

    def cancel(self, handles) -> list[CancelOutcome]:
        out = []
        for handle in handles:
            try:
                sandbox = self._sandbox(handle)
            except UnknownHandle:
                out.append(CancelOutcome(handle, False, "unknown handle"))
                continue
            if handle in self.queue:
                self.queue.remove(handle)
                self.cancelled.add(handle)
                self.dequeued.add(handle)
                out.append(CancelOutcome(handle, True))
                continue
            if read_exit_code(sandbox) is not None:
                out.append(CancelOutcome(handle, True, "already finished"))
                continue
            proc = self.procs.get(handle)
            pid = proc.pid if proc is not None else _pid_from(sandbox / "wrapper.pid")
            self.cancelled.add(handle)
            if pid and _alive(pid):
                with contextlib.suppress(ProcessLookupError, PermissionError):
                    os.killpg(pid, signal.SIGTERM)
            out.append(CancelOutcome(handle, True))
        return out

    def retrieve(self, handle: str) -> int | None:
        return read_exit_code(self._sandbox(handle))

    def close(self) -> None:
        for proc in self.procs.values():
            with contextlib.suppress(Exception):
                proc.poll()
