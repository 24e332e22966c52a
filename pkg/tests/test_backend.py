from __future__ import annotations

import os
import time
from pathlib import Path

import pytest

from gridflow.backend import BackendEvent, MultiplexBackend, SubmitRequest, multiplex
from gridflow.backend.base import Backend
from gridflow.backend.local import LocalBackend, read_exit_code, render_wrapper, sandbox_path
from gridflow.backend.mock import MockBackend, MockScript
from gridflow.config import parse_text
from gridflow.errors import SubmitFailed, UnknownHandle


def _req(job_id, attempt=0, tmp=Path("/tmp"), exe="/bin/true", values=None):
    return SubmitRequest(job_id, attempt, values or {}, Path(exe), "", [], sandbox_path(tmp, job_id, attempt), {})


def _script(tmp_path, body):
    path = tmp_path / "job.sh"
    path.write_text("#!/bin/sh\n" + body)
    path.chmod(0o755)
    return path


def _poll_until_terminal(backend, handles, timeout=10.0):
    kinds = {h: [] for h in handles}
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        for ev in backend.poll(handles):
            kinds[ev.backend_handle].append(ev)
        if all(ev and ev[-1].kind in ("done", "failed", "cancelled") for ev in kinds.values()):
            return kinds
        time.sleep(0.02)
    raise AssertionError(f"jobs did not finish: {kinds}")


def test_event_exit_code_invariant():
    BackendEvent("h", "done", 0)
    with pytest.raises(ValueError):
        BackendEvent("h", "done", None)
    with pytest.raises(ValueError):
        BackendEvent("h", "running", 0)


# -- mock ------------------------------------------------------------------

def test_mock_latency_two_event_sequence():
    backend = MockBackend(MockScript(seed=1, latency_polls=2))
    handle = backend.submit(_req(0))
    kinds = [[ev.kind for ev in backend.poll([handle])] for _ in range(4)]
    assert kinds == [["queued"], ["running"], ["done"], []]


def test_mock_poll_empty():
    assert MockBackend().poll([]) == []


def test_mock_forced_failure():
    backend = MockBackend(MockScript(forced_outcomes={0: "failed"}, latency_polls=0))
    handle = backend.submit(_req(0))
    (ev,) = backend.poll([handle])
    assert (ev.kind, ev.exit_code) == ("failed", 1)
    assert backend.retrieve(handle) == 1


def _failed_ids(seed):
    backend = MockBackend(MockScript(seed=seed, latency_polls=0, failure_rate=0.1))
    handles = [backend.submit(_req(i)) for i in range(1000)]
    return {ev.backend_handle for ev in backend.poll(handles) if ev.kind == "failed"}


def test_mock_is_deterministic_per_seed():
    first, second = _failed_ids(5), _failed_ids(5)
    assert first == second
    assert 50 < len(first) < 150
    assert first != _failed_ids(6)


def test_mock_submit_is_idempotent_and_adopts_handles():
    backend = MockBackend()
    assert backend.submit(_req(3)) == backend.submit(_req(3)) == "mock.3.0"
    fresh = MockBackend()
    assert [ev.kind for ev in fresh.poll(["mock.3.0"])] == ["queued"]
    with pytest.raises(UnknownHandle):
        fresh.poll(["other.1.0"])


def test_mock_cancel_is_idempotent():
    backend = MockBackend(MockScript(latency_polls=5))
    handle = backend.submit(_req(0))
    backend.poll([handle])
    assert backend.cancel([handle])[0].ok
    assert backend.cancel([handle])[0].ok
    assert backend.cancelled == [handle]
    assert [ev.kind for ev in backend.poll([handle])] == ["cancelled"]
    assert backend.poll([handle]) == []


def test_mock_scripted_submit_failures():
    backend = MockBackend(MockScript(seed=2, submit_failure_rate=1.0))
    with pytest.raises(SubmitFailed):
        backend.submit(_req(0))


def test_mock_from_config():
    view = parse_text("[mock]\nseed = 4\nlatency polls = 3\nforced outcomes = 0:failed 2:done\n")
    backend = MockBackend.from_config(view)
    assert backend.script == MockScript(seed=4, latency_polls=3, forced_outcomes={0: "failed", 2: "done"})


# -- local -------------------------------------------------------------------

def test_wrapper_exports_variables():
    text = render_wrapper(_req(4, values={"MUR": "2 x", "bad-name": "1"}))
    assert "export GC_JOB_ID=4" in text
    assert "export MUR='2 x'" in text
    assert "bad-name" not in text
    assert "EXITCODE=$rc" in text


def test_local_runs_and_reports_exit_codes(tmp_path):
    exe = _script(tmp_path, 'echo "job $GC_JOB_ID $MUR"\nexit $CODE\n')
    backend = LocalBackend(tmp_path / "work", slots=4)
    handles = [
        backend.submit(SubmitRequest(i, 0, {"MUR": str(i), "CODE": str(code)}, exe, "", [],
                                     sandbox_path(tmp_path / "work", i, 0), {}))
        for i, code in enumerate([0, 3])
    ]
    events = _poll_until_terminal(backend, handles)
    assert events[handles[0]][-1].kind == "done"
    assert (events[handles[1]][-1].kind, events[handles[1]][-1].exit_code) == ("failed", 3)
    for i, code in enumerate([0, 3]):
        sandbox = sandbox_path(tmp_path / "work", i, 0)
        assert read_exit_code(sandbox) == code
        assert (sandbox / "job.stdout").read_text() == f"job {i} {i}\n"
    assert backend.retrieve(handles[0]) == 0


def test_local_killed_process_reports_failure(tmp_path):
    exe = _script(tmp_path, "sleep 30\n")
    backend = LocalBackend(tmp_path / "work", slots=1)
    handle = backend.submit(_req(0, tmp=tmp_path / "work", exe=exe))
    sandbox = sandbox_path(tmp_path / "work", 0, 0)
    deadline = time.monotonic() + 5
    while not (sandbox / "job.pid").exists() and time.monotonic() < deadline:
        time.sleep(0.02)
    os.kill(int((sandbox / "job.pid").read_text()), 9)
    events = _poll_until_terminal(backend, [handle])
    last = events[handle][-1]
    assert last.kind == "failed"
    assert last.exit_code == read_exit_code(sandbox) == 128 + 9


def test_local_slots_queue_jobs(tmp_path):
    exe = _script(tmp_path, "sleep 0.3\n")
    backend = LocalBackend(tmp_path / "work", slots=1)
    handles = [backend.submit(_req(i, tmp=tmp_path / "work", exe=exe)) for i in range(2)]
    first = {ev.backend_handle: ev.kind for ev in backend.poll(handles)}
    assert first == {handles[0]: "running", handles[1]: "queued"}
    events = _poll_until_terminal(backend, handles)
    assert all(ev[-1].kind == "done" for ev in events.values())


def test_local_cancel(tmp_path):
    exe = _script(tmp_path, "sleep 30\n")
    backend = LocalBackend(tmp_path / "work", slots=1)
    running, queued = (backend.submit(_req(i, tmp=tmp_path / "work", exe=exe)) for i in range(2))
    backend.poll([running, queued])
    assert all(o.ok for o in backend.cancel([running, queued]))
    events = _poll_until_terminal(backend, [running, queued])
    assert events[running][-1].kind == "cancelled"
    assert events[queued][-1].kind == "cancelled"
    assert backend.retrieve(queued) is None


def test_local_resubmit_is_idempotent_and_recovers_after_restart(tmp_path):
    exe = _script(tmp_path, "exit 0\n")
    work = tmp_path / "work"
    first = LocalBackend(work, slots=2)
    handle = first.submit(_req(0, tmp=work, exe=exe))
    _poll_until_terminal(first, [handle])
    second = LocalBackend(work, slots=2)
    assert second.find(0, 0) == handle
    assert second.submit(_req(0, tmp=work, exe=exe)) == handle
    assert [ev.kind for ev in second.poll([handle])] == ["done"]


def test_local_rejects_missing_executable(tmp_path):
    with pytest.raises(SubmitFailed):
        LocalBackend(tmp_path).submit(_req(0, tmp=tmp_path, exe=tmp_path / "missing.sh"))


# -- multiplex -------------------------------------------------------------

class _Broken(Backend):
    name = "broken"

    def find(self, job_id, attempt):
        return None

    def submit(self, req):
        raise SubmitFailed("always down")


def test_single_backend_is_returned_unchanged():
    backend = MockBackend()
    assert multiplex([backend]) is backend


def test_round_robin_distribution_and_routing():
    a, b = MockBackend(name="a"), MockBackend(name="b")
    mux = multiplex([a, b])
    handles = [mux.submit(_req(i)) for i in range(4)]
    assert handles == ["a/a.0.0", "b/b.1.0", "a/a.2.0", "b/b.3.0"]
    assert (a.calls["submit"], b.calls["submit"]) == (2, 2)
    assert {ev.backend_handle for ev in mux.poll(handles)} == set(handles)
    mux.cancel([handles[1]])
    assert b.cancelled == ["b.1.0"] and a.cancelled == []
    assert mux.submit(_req(2)) == "a/a.2.0"


def test_failing_backend_does_not_contaminate_the_other():
    good = MockBackend(name="good")
    mux = MultiplexBackend([good, _Broken()])
    outcomes = []
    for i in range(4):
        try:
            outcomes.append(mux.submit(_req(i)))
        except SubmitFailed:
            outcomes.append(None)
    assert outcomes == ["good/good.0.0", None, "good/good.2.0", None]
    assert [ev.kind for ev in mux.poll(["good/good.0.0", "good/good.2.0"])] == ["queued", "queued"]
    with pytest.raises(UnknownHandle):
        mux.poll(["nobody/x.1.0"])
