"""The workflow engine: startup reconciliation and the activity cycle."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import jobdb, plugins
from .backend import multiplex
from .config import ConfigView, canonical_name, parse_config
from .errors import ConfigError, SelectorSyntaxError, SubmitFailed
from .fsutil import WorkdirLock, crashpoint
from .jobdb import IN_FLIGHT, ActivityConfig, JobDB, JobState, select_chunk
from .paramspace import (
    SpaceSnapshot,
    apply_diff,
    build_space,
    diff_spaces,
    load_snapshot,
    parse_duration,
    persist_snapshot,
)

log = logging.getLogger(__name__)

SNAPSHOT_FILE = "params.snapshot"

_EVENT_STATE = {
    "queued": JobState.QUEUED,
    "running": JobState.RUNNING,
    "done": JobState.DONE,
    "failed": JobState.FAILED,
    "cancelled": JobState.CANCELLED,
}
_PROGRESS = {JobState.SUBMITTED: 0, JobState.QUEUED: 1, JobState.RUNNING: 2}


def parse_selector(text: str):
    """Predicate over job records for ``ALL``, ``1-3,7`` or ``state:<STATE>``."""
    text = text.strip()
    if text.upper() == "ALL":
        return lambda rec: True
    if text.lower().startswith("state:"):
        name = text.split(":", 1)[1].strip().upper()
        try:
            state = JobState(name)
        except ValueError:
            raise SelectorSyntaxError(f"unknown job state {name!r}") from None
        return lambda rec: rec.state == state
    wanted: set = set()
    for item in text.split(","):
        item = item.strip()
        match = re.fullmatch(r"(\d+)(?:-(\d+))?", item)
        if match is None:
            raise SelectorSyntaxError(f"bad job selector {item!r} in {text!r}")
        lo = int(match.group(1))
        hi = int(match.group(2)) if match.group(2) else lo
        if hi < lo:
            raise SelectorSyntaxError(f"empty range {item!r}")
        wanted.update(range(lo, hi + 1))
    return lambda rec: rec.job_id in wanted


@dataclass
class CycleStats:
    polled: int = 0
    retrieved: int = 0
    submitted: int = 0
    submit_failures: int = 0


@dataclass
class Engine:
    """One workflow bound to a config file and its work directory.

    ``backend`` replaces the configured backends (tests use it to inspect a
    mock instance).
    """

    config_path: Path
    overrides: tuple = ()
    backend: object = None
    view: ConfigView = field(init=False)

    def __post_init__(self):
        self.config_path = Path(self.config_path)
        self.view = parse_config([self.config_path], self.overrides)
        self.base_dir = self.config_path.resolve().parent
        view = self.view
        raw = view.get(["global"], "workdir", f"work.{self.config_path.stem}")
        self.workdir = Path(raw) if Path(raw).is_absolute() else self.base_dir / raw
        overrides = {}
        for activity in ("submit", "check", "retrieve"):
            value = view.get(["jobs"], f"chunk size {activity}", None)
            if value is not None:
                overrides[activity] = view.get_int(["jobs"], f"chunk size {activity}")
        in_flight = view.get(["jobs"], "in flight", None)
        try:
            self.cfg = ActivityConfig(
                chunk_size=view.get_int(["jobs"], "chunk size", "100"),
                max_retries=view.get_int(["jobs"], "max retries", "3"),
                in_flight_limit=int(in_flight) if in_flight not in (None, "", "unlimited") else None,
                chunk_overrides=overrides,
            )
        except ValueError as exc:
            raise ConfigError(f"[jobs]: {exc}") from None
        self.interval = view.get_float(["global"], "interval", "60")
        if self.interval < 0:
            raise ConfigError("[global] interval must be >= 0")
        self.default_requirements = {}
        if view.get(["jobs"], "wall time", None):
            self.default_requirements["WALLTIME"] = parse_duration(view.get(["jobs"], "wall time"))
        for key, name in (("memory", "MEMORY"), ("cpus", "CPUS")):
            if view.get(["jobs"], key, None):
                self.default_requirements[name] = view.get_int(["jobs"], key)
        self.lock = WorkdirLock(self.workdir)
        self.db: JobDB | None = None
        self.points: dict = {}
        self.datasets: dict = {}
        self._sources: dict = {}
        self.task = None
        self.changes: dict = {}
        self.startup = {"disabled": [], "appended": []}

    # -- lifecycle ---------------------------------------------------------

    def open(self, setup: bool = True) -> "Engine":
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.lock.acquire()
        try:
            if setup:
                self.setup()
            else:
                self._build_backend()
                self.db = jobdb.load(self.workdir)
        except BaseException:
            self.close()
            raise
        return self

    def close(self) -> None:
        for mgr in self.datasets.values():
            mgr.close()
        if self.backend is not None:
            self.backend.close()
        self.lock.release()

    def __enter__(self):
        return self.open()

    def __exit__(self, *exc):
        self.close()

    def _build_backend(self) -> None:
        if self.backend is not None:
            return
        backends = []
        for entry in self.view.get_list(["global"], "backend", ["local"]):
            kind, _, instance = entry.partition(":")
            name = canonical_name(instance or kind)
            backends.append(
                plugins.create("backend", kind, self.view, name, "backend", ["global"],
                               name=name, workdir=self.workdir)
            )
        self.backend = multiplex(backends)

    def _dataset(self, name: str):
        from .dataset.manager import DatasetManager

        name = canonical_name(name)
        if name not in self.datasets:
            self.datasets[name] = DatasetManager(self.view, name, self.workdir, self.base_dir)
            self._sources[name] = self.datasets[name].refresh()
        return self._sources[name]

    def setup(self) -> None:
        """Rebuild the parameter space and reconcile it with the stored jobs."""
        view = self.view
        task_name = view.get(["global"], "task", "UserTask")
        self.task = plugins.create("task", task_name, view, canonical_name(task_name), "task", ["global"],
                                   base_dir=self.base_dir)
        self._build_backend()
        default_ds = "dataset" if view.has("dataset", "source") else None
        points = build_space(view, self._dataset, default_ds)

        snap_path = self.workdir / SNAPSHOT_FILE
        old = load_snapshot(snap_path) if snap_path.exists() else SpaceSnapshot()
        diff = diff_spaces(old, points)
        new_snapshot = apply_diff(old, diff)
        if not diff.unchanged or not snap_path.exists():
            persist_snapshot(new_snapshot, snap_path)
        crashpoint("setup:snapshot-written")

        self.db = jobdb.load(self.workdir)
        self.points = dict(diff.assignments)
        self.points.update(diff.appended)
        active = {e.job_id for e in new_snapshot.entries if e.active}
        for job_id in sorted(active):
            if job_id not in self.db:
                self.db.add(job_id)
                self.changes[job_id] = (None, JobState.INIT)
        stale = [
            rec.job_id for rec in self.db
            if rec.job_id not in active and not jobdb.is_terminal(rec, self.cfg.max_retries)
        ]
        self._disable(stale)
        self.startup = {"disabled": sorted(diff.disabled), "appended": [j for j, _ in diff.appended]}
        if diff.disabled or diff.appended:
            log.info("parameter space changed: %d jobs disabled, %d appended",
                     len(diff.disabled), len(diff.appended))
        jobdb.persist(self.db, self.workdir)
        crashpoint("setup:jobs-written")
        for section, key in view.unused_options():
            log.warning("unused option %s.%s (%s)", section, key, view.provenance[(section, key)])

    def _disable(self, job_ids) -> None:
        in_flight = [j for j in job_ids if self.db[j].state in IN_FLIGHT and self.db[j].backend_handle]
        if in_flight:
            self.backend.cancel([self.db[j].backend_handle for j in in_flight])
        for job_id in job_ids:
            self._move(job_id, JobState.DISABLED)

    def _move(self, job_id, to_state, **kwargs):
        before = self.db[job_id].state
        rec = self.db.transition(job_id, to_state, self.cfg.max_retries, **kwargs)
        first = self.changes.get(job_id, (before, None))[0]
        self.changes[job_id] = (first, rec.state)
        return rec

    # -- activities ----------------------------------------------------------

    def _chunks(self, activity: str):
        after = None
        while True:
            ids = select_chunk(self.db, activity, self.cfg, after)
            if not ids:
                return
            yield ids
            after = ids[-1]

    def _apply_event(self, job_id: int, ev) -> None:
        rec = self.db[job_id]
        target = _EVENT_STATE[ev.kind]
        if rec.state not in IN_FLIGHT:
            return
        if target in _PROGRESS:
            if _PROGRESS[target] > _PROGRESS[rec.state]:
                self._move(job_id, target)
            return
        if target == JobState.DONE and rec.state != JobState.RUNNING:
            self._move(job_id, JobState.RUNNING)
        self._move(job_id, target, exit_code=ev.exit_code)

    def check(self, stats: CycleStats) -> None:
        for ids in self._chunks("check"):
            by_handle = {self.db[j].backend_handle: j for j in ids}
            for ev in self.backend.poll(list(by_handle)):
                job_id = by_handle.get(ev.backend_handle)
                if job_id is not None:
                    self._apply_event(job_id, ev)
            stats.polled += len(ids)
            crashpoint("cycle:check-chunk")

    def retrieve(self, stats: CycleStats) -> None:
        for ids in self._chunks("retrieve"):
            for job_id in ids:
                code = self.backend.retrieve(self.db[job_id].backend_handle)
                if code == 0:
                    self._move(job_id, JobState.SUCCESS, exit_code=0)
                else:
                    self._move(job_id, JobState.FAILED, exit_code=-1 if code is None else code)
                stats.retrieved += 1
            crashpoint("cycle:retrieve-chunk")

    def job_inputs(self, job_id: int) -> tuple[dict, dict]:
        """Variables and requirements for a job, loading dataset partitions on demand."""
        point = self.points[job_id]
        values = dict(point.values)
        reqs = dict(self.default_requirements)
        if point.partition:
            for ident in point.partition.split("|"):
                name, _, pid = ident.rpartition(":")
                frag_values, frag_reqs = self.datasets[name].fragment(int(pid))
                values.update(frag_values)
                reqs.update(frag_reqs)
        reqs.update(point.requirements)
        return values, reqs

    def submit(self, stats: CycleStats) -> None:
        for ids in self._chunks("submit"):
            for job_id in ids:
                rec = self.db[job_id]
                attempt = rec.attempt + 1 if rec.state == JobState.FAILED else rec.attempt
                values, reqs = self.job_inputs(job_id)
                req = self.task.request(job_id, attempt, values, reqs, self.workdir)
                try:
                    handle = self.backend.submit(req)
                except SubmitFailed as exc:
                    # infrastructure fault: no state change, no retry consumed
                    log.warning("job %d: submission failed: %s", job_id, exc.reason)
                    stats.submit_failures += 1
                    continue
                self._move(job_id, JobState.SUBMITTED, handle=handle)
                stats.submitted += 1
            crashpoint("cycle:submit-chunk")

    def cycle(self) -> CycleStats:
        """One check -> retrieve -> submit pass, then commit the job database."""
        stats = CycleStats()
        self.check(stats)
        self.retrieve(stats)
        self.submit(stats)
        jobdb.persist(self.db, self.workdir)
        crashpoint("cycle:committed")
        return stats

    def finished(self) -> bool:
        return all(jobdb.is_finished(rec, self.cfg.max_retries) for rec in self.db)

    def cancel(self, selector: str) -> int:
        """Cancel the matching queued/running jobs; returns how many were cancelled."""
        match = parse_selector(selector)
        targets = [rec.job_id for rec in self.db if match(rec) and rec.state in IN_FLIGHT]
        by_handle = {self.db[j].backend_handle: j for j in targets}
        count = 0
        for outcome in self.backend.cancel(list(by_handle)):
            job_id = by_handle.get(outcome.handle)
            if job_id is None:
                continue
            if outcome.ok:
                self._move(job_id, JobState.CANCELLED)
                count += 1
            else:
                log.warning("job %d: cancel failed: %s", job_id, outcome.message)
        jobdb.persist(self.db, self.workdir)
        return count

    # -- reporting -----------------------------------------------------------

    def report(self) -> str:
        return format_report(self.db, self.changes)


def format_report(db: JobDB, changes: dict | None = None) -> str:
    lines = []
    for job_id in sorted(changes or {}):
        before, after = changes[job_id]
        if before == after:
            continue
        lines.append(f"job {job_id}: {before.value if before else '(new)'} -> {after.value}")
    counts = db.counts()
    lines.append(" ".join(f"{state.value}:{n}" for state, n in counts.items()))
    lines.append(f"total:{len(db)} active:{db.in_flight()}")
    return "\n".join(lines)
