"""Job records, the retry state machine and sort-then-chunk job selection.

Job file::

    version 1 generation <g>
    <job_id> <state> <attempt> <exit_code|-> <backend_handle|->
    ...
    end <record count>

State history goes to the append-only sidecar ``jobs.history`` as
``<generation> <job_id> <timestamp> <state>`` lines.  Entries newer than the
committed job file generation are discarded on load.
"""

from __future__ import annotations

import enum
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorruptJobFile, IllegalTransition
from .fsutil import atomic_writer, crashpoint

JOB_FILE = "jobs.db"
HISTORY_FILE = "jobs.history"


class JobState(str, enum.Enum):
    INIT = "INIT"
    SUBMITTED = "SUBMITTED"
    QUEUED = "QUEUED"
    RUNNING = "RUNNING"
    DONE = "DONE"
    SUCCESS = "SUCCESS"
    FAILED = "FAILED"
    CANCELLED = "CANCELLED"
    DISABLED = "DISABLED"

    def __str__(self) -> str:
        return self.value


S = JobState
IN_FLIGHT = frozenset({S.SUBMITTED, S.QUEUED, S.RUNNING})

_TRANSITIONS = {
    S.INIT: {S.SUBMITTED},
    S.SUBMITTED: {S.QUEUED, S.RUNNING, S.FAILED, S.CANCELLED},
    S.QUEUED: {S.RUNNING, S.FAILED, S.CANCELLED},
    S.RUNNING: {S.DONE, S.FAILED, S.CANCELLED},
    S.DONE: {S.SUCCESS, S.FAILED},
    S.FAILED: {S.SUBMITTED},
    S.CANCELLED: set(),
    S.SUCCESS: set(),
    S.DISABLED: set(),
}


@dataclass(slots=True)
class JobRecord:
    job_id: int
    state: JobState = S.INIT
    attempt: int = 0
    backend_handle: str | None = None
    exit_code: int | None = None
    history: list = field(default_factory=list)  # (timestamp, state)


@dataclass
class ActivityConfig:
    chunk_size: int = 100
    max_retries: int = 3
    in_flight_limit: int | None = None
    chunk_overrides: dict = field(default_factory=dict)  # activity -> M

    def __post_init__(self):
        if self.chunk_size < 1 or any(m < 1 for m in self.chunk_overrides.values()):
            raise ValueError("chunk size must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max retries must be >= 0")
        if self.in_flight_limit is not None and self.in_flight_limit < 1:
            raise ValueError("in-flight limit must be >= 1")

    def chunk_for(self, activity: str) -> int:
        return self.chunk_overrides.get(activity, self.chunk_size)


def is_terminal(record: JobRecord, max_retries: int) -> bool:
    """True for SUCCESS, DISABLED and FAILED jobs out of retries."""
    if record.state in (S.SUCCESS, S.DISABLED):
        return True
    return record.state == S.FAILED and record.attempt >= max_retries


def is_finished(record: JobRecord, max_retries: int) -> bool:
    """Terminal, or cancelled (a cancelled job is never resubmitted)."""
    return record.state == S.CANCELLED or is_terminal(record, max_retries)


def can_transition(record: JobRecord, to_state: JobState, max_retries: int) -> bool:
    if to_state == S.DISABLED:
        return not is_terminal(record, max_retries)
    if to_state not in _TRANSITIONS[record.state]:
        return False
    if record.state == S.FAILED:
        return record.attempt < max_retries
    return True


def apply_transition(record: JobRecord, to_state: JobState, max_retries: int, *,
                     exit_code=None, handle=None, now: float | None = None) -> JobRecord:
    """Return the record after moving to ``to_state``; FAILED -> SUBMITTED bumps the attempt."""
    to_state = JobState(to_state)
    if not can_transition(record, to_state, max_retries):
        raise IllegalTransition(record.job_id, record.state, to_state)
    ts = time.time() if now is None else now
    if record.history and ts < record.history[-1][0]:
        ts = record.history[-1][0]
    attempt = record.attempt + 1 if (record.state == S.FAILED and to_state == S.SUBMITTED) else record.attempt
    if to_state == S.SUBMITTED:
        backend_handle, code = handle, None
    else:
        backend_handle = record.backend_handle if handle is None else handle
        code = exit_code if exit_code is not None else record.exit_code
    return JobRecord(record.job_id, to_state, attempt, backend_handle, code, [*record.history, (ts, to_state)])


class JobDB:
    """In-memory map of all job records with a per-state index."""

    def __init__(self, records=(), generation: int = 0):
        self.records: dict[int, JobRecord] = {}
        self.by_state: dict[JobState, set] = {s: set() for s in JobState}
        self.generation = generation
        self.sort_passes: dict[str, int] = {"submit": 0, "check": 0, "retrieve": 0}
        self._pending_history: list = []
        for rec in records:
            self._put(rec)

    def _put(self, rec: JobRecord) -> None:
        old = self.records.get(rec.job_id)
        if old is not None:
            self.by_state[old.state].discard(rec.job_id)
        self.records[rec.job_id] = rec
        self.by_state[rec.state].add(rec.job_id)

    def add(self, job_id: int) -> JobRecord:
        if job_id in self.records:
            raise ValueError(f"job {job_id} already exists")
        rec = JobRecord(job_id)
        self._put(rec)
        return rec

    def transition(self, job_id: int, to_state, max_retries: int, **kwargs) -> JobRecord:
        rec = apply_transition(self.records[job_id], to_state, max_retries, **kwargs)
        self._put(rec)
        self._pending_history.append((rec.job_id, *rec.history[-1]))
        return rec

    def __getitem__(self, job_id: int) -> JobRecord:
        return self.records[job_id]

    def __contains__(self, job_id) -> bool:
        return job_id in self.records

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records.values())

    def ids(self, states) -> set:
        out: set = set()
        for state in states:
            out |= self.by_state[state]
        return out

    def in_flight(self) -> int:
        return sum(len(self.by_state[s]) for s in IN_FLIGHT)

    def counts(self) -> dict:
        return {state: len(self.by_state[state]) for state in JobState}


def eligible(db: JobDB, activity: str, cfg: ActivityConfig) -> set:
    if activity == "submit":
        ids = set(db.by_state[S.INIT])
        ids.update(j for j in db.by_state[S.FAILED] if db.records[j].attempt < cfg.max_retries)
        return ids
    if activity == "check":
        return db.ids(IN_FLIGHT)
    if activity == "retrieve":
        return set(db.by_state[S.DONE])
    raise ValueError(f"unknown activity {activity!r}")


def select_chunk(db: JobDB, activity: str, cfg: ActivityConfig, after: int | None = None) -> list[int]:
    """Sort the full eligible list, then return its first chunk.

    ``after`` skips ids up to and including it, letting one activity pass
    walk the list chunk by chunk.  Every non-empty selection counts one
    sort pass in ``db.sort_passes[activity]``.
    """
    ids = eligible(db, activity, cfg)
    if after is not None:
        ids = {j for j in ids if j > after}
    limit = cfg.chunk_for(activity)
    if activity == "submit" and cfg.in_flight_limit is not None:
        limit = min(limit, max(0, cfg.in_flight_limit - db.in_flight()))
    if not ids or limit == 0:
        return []
    ordered = sorted(ids)
    db.sort_passes[activity] += 1
    return ordered[:limit]


# -- persistence -------------------------------------------------------------


def _fmt(value) -> str:
    return "-" if value is None else str(value)


def persist(db: JobDB, workdir) -> None:
    """Commit the next generation: history first, then the job file by atomic rename."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    generation = db.generation + 1
    if db._pending_history:
        with open(workdir / HISTORY_FILE, "a", encoding="utf-8") as fh:
            fh.write("".join(f"{generation} {j} {ts!r} {st.value}\n" for j, ts, st in db._pending_history))
            fh.flush()
            os.fsync(fh.fileno())
    crashpoint("jobdb:history-written")
    with atomic_writer(workdir / JOB_FILE) as fh:
        fh.write(f"version 1 generation {generation}\n")
        write = fh.write
        for job_id in sorted(db.records):
            r = db.records[job_id]
            write(f"{job_id} {r.state.value} {r.attempt} {_fmt(r.exit_code)} {_fmt(r.backend_handle)}\n")
        write(f"end {len(db.records)}\n")
    db.generation = generation
    db._pending_history.clear()


def load(workdir, repair: bool = True) -> JobDB:
    """Load the last committed generation (an empty database if none exists).

    With ``repair`` the history sidecar is cut back to that generation;
    read-only callers such as ``--report`` pass False.
    """
    workdir = Path(workdir)
    path = workdir / JOB_FILE
    if not path.exists():
        return JobDB()
    records: dict[int, JobRecord] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != ["version", "1"]:
            raise CorruptJobFile("-", "(bad header)")
        generation = int(header[3]) if len(header) >= 4 and header[2] == "generation" else 0
        ended = False
        for line in fh:
            parts = line.split()
            if parts and parts[0] == "end":
                if len(parts) != 2 or int(parts[1]) != len(records):
                    raise CorruptJobFile("-", "(record count mismatch)")
                ended = True
                continue
            if ended or len(parts) != 5 or not line.endswith("\n"):
                raise CorruptJobFile(parts[0] if parts else "-", "(malformed line)")
            try:
                job_id = int(parts[0])
                state = JobState(parts[1])
                attempt = int(parts[2])
                exit_code = None if parts[3] == "-" else int(parts[3])
            except ValueError:
                raise CorruptJobFile(parts[0], "(malformed field)") from None
            handle = None if parts[4] == "-" else parts[4]
            records[job_id] = JobRecord(job_id, state, attempt, handle, exit_code, [])
        if not ended:
            raise CorruptJobFile("-", "(missing end marker)")
    _load_history(workdir / HISTORY_FILE, records, generation, repair)
    db = JobDB(generation=generation)
    for rec in records.values():
        db._put(rec)
    return db


def _load_history(path: Path, records: dict, generation: int, repair: bool = True) -> None:
    if not path.exists():
        return
    keep_bytes = 0
    with open(path, "rb") as fh:
        for raw in fh:
            if not raw.endswith(b"\n"):
                break
            parts = raw.decode("utf-8").split()
            if len(parts) != 4 or int(parts[0]) > generation:
                break
            rec = records.get(int(parts[1]))
            if rec is not None:
                rec.history.append((float(parts[2]), JobState(parts[3])))
            keep_bytes += len(raw)
    if repair and keep_bytes != path.stat().st_size:
        # drop history of a generation that never committed
        with open(path, "r+b") as fh:
            fh.truncate(keep_bytes)
