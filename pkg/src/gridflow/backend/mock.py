"""Deterministic mock batch system with scripted outcomes and fault injection."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

from ..errors import ConfigError, SubmitFailed, UnknownHandle
from .base import Backend, BackendEvent, CancelOutcome, SubmitRequest, parse_handle


@dataclass
class MockScript:
    seed: int = 0
    latency_polls: int = 1
    failure_rate: float = 0.0
    forced_outcomes: dict = field(default_factory=dict)  # job_id -> done|failed|cancelled
    submit_failure_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.failure_rate <= 1.0 or not 0.0 <= self.submit_failure_rate <= 1.0:
            raise ValueError("rates must lie in [0, 1]")
        if self.latency_polls < 0:
            raise ValueError("latency_polls must be >= 0")

    def outcome(self, job_id: int, attempt: int) -> str:
        forced = self.forced_outcomes.get(job_id)
        if forced is not None:
            return forced
        rng = random.Random(f"{self.seed}:{job_id}:{attempt}")
        return "failed" if rng.random() < self.failure_rate else "done"

    def submit_fails(self, job_id: int, attempt: int, tries: int) -> bool:
        if not self.submit_failure_rate:
            return False
        rng = random.Random(f"{self.seed}:submit:{job_id}:{attempt}:{tries}")
        return rng.random() < self.submit_failure_rate


class _Job:
    __slots__ = ("job_id", "attempt", "polls", "cancelled", "last", "finished")

    def __init__(self, job_id, attempt):
        self.job_id = job_id
        self.attempt = attempt
        self.polls = 0
        self.cancelled = False
        self.last = None
        self.finished = False


class MockBackend(Backend):
    """Scripted backend: each poll advances every job by one step.

    A job reports ``queued`` on its first poll, ``running`` while within
    ``latency_polls`` and its scripted outcome on poll ``latency_polls + 1``.
    Outcomes depend only on (seed, job_id, attempt), so a restarted engine
    gets the same results.  Handles from an earlier process are adopted.
    """

    def __init__(self, script: MockScript | None = None, name: str = "mock"):
        self.script = script or MockScript()
        self.name = name
        self.jobs: dict[str, _Job] = {}
        self.calls: Counter = Counter()
        self.cancelled: list[str] = []
        self._submit_tries: Counter = Counter()

    @classmethod
    def from_config(cls, view, section="mock", name="mock", **_):
        scope = [section, "mock"]
        forced = {}
        for item in view.get_list(scope, "forced outcomes"):
            job, sep, kind = item.partition(":")
            if not sep or kind not in ("done", "failed", "cancelled"):
                raise ConfigError(f"{view.where(scope, 'forced outcomes')}: bad forced outcome {item!r}")
            forced[int(job)] = kind
        script = MockScript(
            seed=view.get_int(scope, "seed", "0"),
            latency_polls=view.get_int(scope, "latency polls", "1"),
            failure_rate=view.get_float(scope, "failure rate", "0"),
            forced_outcomes=forced,
            submit_failure_rate=view.get_float(scope, "submit failure rate", "0"),
        )
        return cls(script, name)

    def _handle(self, job_id, attempt) -> str:
        return f"{self.name}.{job_id}.{attempt}"

    def _job(self, handle: str) -> _Job:
        job = self.jobs.get(handle)
        if job is None:
            parsed = parse_handle(handle, self.name)
            if parsed is None:
                raise UnknownHandle(handle)
            job = self.jobs[handle] = _Job(*parsed)
        return job

    def find(self, job_id, attempt):
        handle = self._handle(job_id, attempt)
        return handle if handle in self.jobs else None

    def submit(self, req: SubmitRequest) -> str:
        self.calls["submit"] += 1
        handle = self._handle(req.job_id, req.attempt)
        if handle in self.jobs:
            return handle
        key = (req.job_id, req.attempt)
        tries = self._submit_tries[key]
        self._submit_tries[key] += 1
        if self.script.submit_fails(req.job_id, req.attempt, tries):
            raise SubmitFailed(f"{self.name}: scripted submit failure for job {req.job_id}")
        self.jobs[handle] = _Job(req.job_id, req.attempt)
        return handle

    def poll(self, handles) -> list[BackendEvent]:
        self.calls["poll"] += 1
        events = []
        latency = self.script.latency_polls
        for handle in handles:
            job = self._job(handle)
            if job.finished:
                continue
            job.polls += 1
            if job.cancelled:
                kind = "cancelled"
            elif job.polls > latency:
                kind = self.script.outcome(job.job_id, job.attempt)
            elif job.polls == 1:
                kind = "queued"
            else:
                kind = "running"
            if kind == job.last:
                continue
            job.last = kind
            if kind in ("done", "failed", "cancelled"):
                job.finished = True
            code = {"done": 0, "failed": 1}.get(kind)
            events.append(BackendEvent(handle, kind, code))
        return events

    def cancel(self, handles) -> list[CancelOutcome]:
        out = []
        for handle in handles:
            self.calls["cancel"] += 1
            job = self._job(handle)
            if not job.finished and not job.cancelled:
                job.cancelled = True
                self.cancelled.append(handle)
            out.append(CancelOutcome(handle, True))
        return out

    def retrieve(self, handle: str) -> int | None:
        job = self._job(handle)
        return 0 if self.script.outcome(job.job_id, job.attempt) == "done" else 1
