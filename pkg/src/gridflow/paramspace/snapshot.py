"""Persisted parameter space and diffing against a new enumeration.

File layout::

    version 1
    <job_id> <hash> <url-encoded var=value pairs joined by '&'>
    ...
    end <entry count>

The hash of a disabled job is prefixed with ``!``; such jobs never match
again, so their ids are never reused.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import quote, unquote

from ..errors import CorruptSnapshot
from ..fsutil import atomic_writer

VERSION_LINE = "version 1"


@dataclass(slots=True)
class SnapshotEntry:
    job_id: int
    hash: str
    values: dict
    active: bool = True


@dataclass
class SpaceSnapshot:
    entries: list = field(default_factory=list)
    max_job_id: int = -1

    def active_entries(self):
        return [e for e in self.entries if e.active]


@dataclass
class SpaceDiff:
    assignments: dict  # job_id -> ParameterPoint, for retained jobs
    disabled: list  # job ids whose point vanished
    appended: list  # (new job_id, ParameterPoint)

    @property
    def unchanged(self) -> bool:
        return not self.disabled and not self.appended


def diff_spaces(old: SpaceSnapshot, new_points) -> SpaceDiff:
    """Match old jobs to new points by hash.

    Old active jobs are scanned in id order and each binds the earliest
    still unbound new point with the same hash.  Unbound old jobs are
    disabled; unbound new points get fresh ids after ``old.max_job_id`` in
    enumeration order.
    """
    by_hash: dict[str, deque] = {}
    for index, point in enumerate(new_points):
        by_hash.setdefault(point.hash, deque()).append(index)
    bound = [False] * len(new_points)
    assignments = {}
    disabled = []
    for entry in sorted(old.active_entries(), key=lambda e: e.job_id):
        queue = by_hash.get(entry.hash)
        if queue:
            index = queue.popleft()
            bound[index] = True
            assignments[entry.job_id] = new_points[index]
        else:
            disabled.append(entry.job_id)
    appended = []
    next_id = old.max_job_id + 1
    for index, point in enumerate(new_points):
        if not bound[index]:
            appended.append((next_id, point))
            next_id += 1
    return SpaceDiff(assignments, disabled, appended)


def apply_diff(old: SpaceSnapshot, diff: SpaceDiff) -> SpaceSnapshot:
    """New snapshot: retained and appended jobs active, disabled ones kept inactive."""
    disabled = set(diff.disabled)
    entries = []
    for entry in old.entries:
        if entry.job_id in disabled:
            entries.append(SnapshotEntry(entry.job_id, entry.hash, entry.values, False))
        elif entry.active and entry.job_id in diff.assignments:
            point = diff.assignments[entry.job_id]
            entries.append(SnapshotEntry(entry.job_id, entry.hash, point.values, True))
        else:
            entries.append(entry)
    max_id = old.max_job_id
    for job_id, point in diff.appended:
        entries.append(SnapshotEntry(job_id, point.hash, point.values, True))
        max_id = max(max_id, job_id)
    return SpaceSnapshot(entries, max_id)


def snapshot_from_points(points) -> SpaceSnapshot:
    entries = [SnapshotEntry(i, p.hash, p.values, True) for i, p in enumerate(points)]
    return SpaceSnapshot(entries, len(entries) - 1)


def _encode_values(values: dict) -> str:
    return "&".join(f"{quote(k, safe='')}={quote(v, safe='')}" for k, v in values.items())


def _decode_values(text: str) -> dict:
    values = {}
    if not text:
        return values
    for pair in text.split("&"):
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValueError(pair)
        values[unquote(key)] = unquote(value)
    return values


def persist_snapshot(space: SpaceSnapshot, path) -> None:
    with atomic_writer(path) as fh:
        fh.write(VERSION_LINE + "\n")
        for e in space.entries:
            mark = "" if e.active else "!"
            encoded = _encode_values(e.values)
            fh.write(f"{e.job_id} {mark}{e.hash} {encoded}\n" if encoded else f"{e.job_id} {mark}{e.hash}\n")
        fh.write(f"end {len(space.entries)}\n")


def load_snapshot(path) -> SpaceSnapshot:
    """Load a snapshot, refusing anything that is not a complete file."""
    path = Path(path)
    entries = []
    max_id = -1
    ended = False
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if header.rstrip("\n") != VERSION_LINE:
            raise CorruptSnapshot(path, 1, "(bad header)")
        lineno = 1
        for lineno, line in enumerate(fh, 2):
            if ended:
                raise CorruptSnapshot(path, lineno, "(data after end marker)")
            if not line.endswith("\n"):
                raise CorruptSnapshot(path, lineno, "(truncated line)")
            parts = line.rstrip("\n").split(" ", 2)
            if parts[0] == "end":
                if len(parts) != 2 or parts[1] != str(len(entries)):
                    raise CorruptSnapshot(path, lineno, "(entry count mismatch)")
                ended = True
                continue
            try:
                job_id = int(parts[0])
                hash_ = parts[1]
                values = _decode_values(parts[2] if len(parts) > 2 else "")
            except (ValueError, IndexError):
                raise CorruptSnapshot(path, lineno) from None
            if job_id <= max_id:
                raise CorruptSnapshot(path, lineno, "(job ids not increasing)")
            active = not hash_.startswith("!")
            entries.append(SnapshotEntry(job_id, hash_ if active else hash_[1:], values, active))
            max_id = job_id
    if not ended:
        raise CorruptSnapshot(path, lineno + 1, "(missing end marker)")
    return SpaceSnapshot(entries, max_id)
