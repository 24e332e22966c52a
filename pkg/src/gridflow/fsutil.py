"""Crash-safe file helpers: atomic replace, workdir lock, crash points."""

from __future__ import annotations

import atexit
import contextlib
import os
import tempfile
from pathlib import Path

from .errors import LockHeld

_CRASH_AT = int(os.environ.get("GRIDFLOW_CRASH_AT", "0") or 0)
_CRASH_COUNT_FILE = os.environ.get("GRIDFLOW_CRASH_COUNT_FILE")
_crash_counter = 0


def crashpoint(name: str) -> None:
    """Fault-injection hook; terminates the process at the configured hit.

    ``GRIDFLOW_CRASH_AT=n`` kills the process (no cleanup, like SIGKILL) on
    the n-th crash point reached. ``GRIDFLOW_CRASH_COUNT_FILE`` records how
    many crash points a run passed through.
    """
    global _crash_counter
    _crash_counter += 1
    if _CRASH_AT and _crash_counter == _CRASH_AT:
        os._exit(137)


def _write_crash_count() -> None:
    if _CRASH_COUNT_FILE:
        Path(_CRASH_COUNT_FILE).write_text(str(_crash_counter))


atexit.register(_write_crash_count)


@contextlib.contextmanager
def atomic_writer(path, mode="w", encoding="utf-8"):
    """Yield a file handle whose content replaces ``path`` only on success.

    Data is fsynced before the rename; on any error the temporary file is
    removed and ``path`` is left untouched.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    kwargs = {} if "b" in mode else {"encoding": encoding, "newline": "\n"}
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        crashpoint(f"rename:{path.name}")
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    with atomic_writer(path) as fh:
        fh.write(text)


def _pid_alive(pid: int) -> bool:
    if pid <= 0:
        return False
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class WorkdirLock:
    """Create-exclusive lock file holding the owner's pid.

    A lock whose owner is no longer alive is considered stale and taken over.
    """

    def __init__(self, workdir):
        self.path = Path(workdir) / "lock"
        self.held = False

    def acquire(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(3):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
            except FileExistsError:
                try:
                    pid = int(self.path.read_text().strip() or 0)
                except (OSError, ValueError):
                    pid = 0
                if _pid_alive(pid):
                    raise LockHeld(self.path, pid) from None
                with contextlib.suppress(FileNotFoundError):
                    self.path.unlink()
                continue
            with os.fdopen(fd, "w") as fh:
                fh.write(f"{os.getpid()}\n")
            self.held = True
            return
        raise LockHeld(self.path, -1)

    def release(self) -> None:
        if self.held:
            with contextlib.suppress(FileNotFoundError):
                self.path.unlink()
            self.held = False

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()
