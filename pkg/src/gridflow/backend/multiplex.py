"""Spreads submissions over several backends round-robin."""

from __future__ import annotations

from collections import defaultdict

from ..errors import UnknownHandle
from .base import Backend, BackendEvent, CancelOutcome, SubmitRequest


class MultiplexBackend(Backend):
    """Handles are tagged ``<backend name>/<inner handle>`` for routing."""

    name = "multiplex"

    def __init__(self, backends):
        if not backends:
            raise ValueError("multiplex needs at least one backend")
        names = [b.name for b in backends]
        if len(set(names)) != len(names):
            raise ValueError(f"backend names must be unique: {names}")
        self.backends = list(backends)
        self.by_name = {b.name: b for b in backends}
        self._next = 0

    def _route(self, handle: str):
        name, sep, inner = handle.partition("/")
        backend = self.by_name.get(name)
        if not sep or backend is None:
            raise UnknownHandle(handle)
        return backend, inner

    def find(self, job_id, attempt):
        for backend in self.backends:
            inner = backend.find(job_id, attempt)
            if inner is not None:
                return f"{backend.name}/{inner}"
        return None

    def submit(self, req: SubmitRequest) -> str:
        existing = self.find(req.job_id, req.attempt)
        if existing is not None:
            return existing
        backend = self.backends[self._next]
        self._next = (self._next + 1) % len(self.backends)
        return f"{backend.name}/{backend.submit(req)}"

    def _group(self, handles):
        groups = defaultdict(list)
        for handle in handles:
            backend, inner = self._route(handle)
            groups[backend.name].append(inner)
        return groups

    def poll(self, handles) -> list[BackendEvent]:
        events = []
        for name, inner in self._group(handles).items():
            for ev in self.by_name[name].poll(inner):
                events.append(BackendEvent(f"{name}/{ev.backend_handle}", ev.kind, ev.exit_code))
        return events

    def cancel(self, handles) -> list[CancelOutcome]:
        out = []
        for name, inner in self._group(handles).items():
            for res in self.by_name[name].cancel(inner):
                out.append(CancelOutcome(f"{name}/{res.handle}", res.ok, res.message))
        return out

    def retrieve(self, handle: str):
        backend, inner = self._route(handle)
        return backend.retrieve(inner)

    def close(self) -> None:
        for backend in self.backends:
            backend.close()


def multiplex(backends, policy: str = "round-robin") -> Backend:
    """Combine ``backends``; a single backend is returned unchanged."""
    if policy != "round-robin":
        raise ValueError(f"unsupported distribution policy {policy!r}")
    backends = list(backends)
    if len(backends) == 1:
        return backends[0]
    return MultiplexBackend(backends)
