"""Backend interface shared by all execution targets.

A backend accepts a submission and hands back an opaque handle.  The
engine later polls handles for events, may cancel them, and asks for the
exit code of finished jobs.  Submissions are idempotent per
(job_id, attempt): submitting the same pair twice returns the same handle
instead of starting a second job, which makes restarts after a crash safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

EVENT_KINDS = ("queued", "running", "done", "failed", "cancelled")
TERMINAL_KINDS = frozenset({"done", "failed", "cancelled"})


@dataclass
class SubmitRequest:
    job_id: int
    attempt: int
    values: dict
    executable: Path | None = None
    arguments: str = ""
    input_files: list = field(default_factory=list)
    sandbox_dir: Path | None = None
    requirements: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BackendEvent:
    backend_handle: str
    kind: str
    exit_code: int | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if (self.exit_code is not None) != (self.kind in ("done", "failed")):
            raise ValueError("exit_code must be given exactly for done/failed events")


@dataclass(frozen=True)
class CancelOutcome:
    handle: str
    ok: bool
    message: str = ""


class Backend:
    name = "backend"

    def find(self, job_id: int, attempt: int) -> str | None:
        """Handle of an earlier submission of (job_id, attempt), if any."""
        return None

    def submit(self, req: SubmitRequest) -> str:
        raise NotImplementedError

    def poll(self, handles) -> list[BackendEvent]:
        raise NotImplementedError

    def cancel(self, handles) -> list[CancelOutcome]:
        raise NotImplementedError

    def retrieve(self, handle: str) -> int | None:
        """Exit code recorded for a finished job (None if unknown)."""
        return 0

    def close(self) -> None:
        pass


def parse_handle(handle: str, name: str):
    """Split ``<name>.<job_id>.<attempt>`` handles; None if not ours."""
    prefix, _, rest = handle.rpartition(".")
    backend, _, job = prefix.rpartition(".")
    if backend != name:
        return None
    try:
        return int(job), int(rest)
    except ValueError:
        return None
